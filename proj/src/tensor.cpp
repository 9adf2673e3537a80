#include "habitus/tensor.hpp"

#include <cmath>

namespace habitus {

void Tensor::check_finite(const char* what) const {
    for (double x : v)
        if (!std::isfinite(x)) throw Error("micronet", std::string("non-finite values in ") + what);
}

int argmax_row(const double* row, int k) {
    int best = 0;
    for (int j = 1; j < k; ++j)
        if (row[j] > row[best]) best = j;
    return best;
}

}  // namespace habitus
