#pragma once

namespace pvt {

// Worker count used by every OpenMP kernel in the library. 1 selects the
// single-threaded path; results are bit-identical for any setting.
void set_num_threads(int n);
int num_threads();
int available_cores();

// Restores the previous worker count on scope exit.
class ThreadCountScope {
 public:
  explicit ThreadCountScope(int n) : saved_(num_threads()) { set_num_threads(n); }
  ~ThreadCountScope() { set_num_threads(saved_); }
  ThreadCountScope(const ThreadCountScope&) = delete;
  ThreadCountScope& operator=(const ThreadCountScope&) = delete;

 private:
  int saved_;
};

}  // namespace pvt
