#include "pvt/parallel.hpp"

#include <omp.h>

#include <algorithm>

namespace pvt {

void set_num_threads(int n) { omp_set_num_threads(std::max(1, n)); }

int num_threads() { return omp_get_max_threads(); }

int available_cores() { return omp_get_num_procs(); }

}  // namespace pvt
