#include "gemm.hpp"

#include <Eigen/Core>

#include <atomic>
#include <condition_variable>
#include <cstdlib>
#include <mutex>
#include <thread>
#include <vector>

namespace octevo::detail {

namespace {

using RowMat =
    Eigen::Matrix<Real, Eigen::Dynamic, Eigen::Dynamic, Eigen::RowMajor>;
using CMap = Eigen::Map<const RowMat, 0, Eigen::OuterStride<>>;
using MMap = Eigen::Map<RowMat, 0, Eigen::OuterStride<>>;

class Pool {
 public:
  static Pool& get() {
    static Pool p;
    return p;
  }

  int workers() const { return static_cast<int>(threads_.size()); }

  void run(int nblocks, const std::function<void(int)>& fn) {
    if (threads_.empty() || nblocks <= 1) {
      for (int i = 0; i < nblocks; ++i) fn(i);
      return;
    }
    {
      std::lock_guard<std::mutex> lk(mu_);
      job_ = &fn;
      nblocks_ = nblocks;
      next_.store(0, std::memory_order_relaxed);
      finished_.store(0, std::memory_order_relaxed);
      ++gen_;
    }
    cv_.notify_all();
    drain();
    while (finished_.load(std::memory_order_acquire) < nblocks)
      std::this_thread::yield();
    std::lock_guard<std::mutex> lk(mu_);
    job_ = nullptr;
  }

 private:
  Pool() {
    int n = 4;
    if (const char* env = std::getenv("OCTEVO_THREADS")) {
      n = std::atoi(env);
      if (n < 1) n = 1;
      if (n > 16) n = 16;
    }
    for (int i = 0; i + 1 < n; ++i)
      threads_.emplace_back([this] { worker(); });
  }

  ~Pool() {
    {
      std::lock_guard<std::mutex> lk(mu_);
      stop_ = true;
      ++gen_;
    }
    cv_.notify_all();
    for (auto& t : threads_) t.join();
  }

  void drain();

  void worker() {
    uint64_t seen = 0;
    for (;;) {
      {
        std::unique_lock<std::mutex> lk(mu_);
        cv_.wait(lk, [&] { return gen_ != seen; });
        seen = gen_;
        if (stop_) return;
        if (!job_) continue;
      }
      drain();
    }
  }

  std::vector<std::thread> threads_;
  std::mutex mu_;
  std::condition_variable cv_;
  const std::function<void(int)>* job_ = nullptr;
  int nblocks_ = 0;
  std::atomic<int> next_{0}, finished_{0};
  uint64_t gen_ = 0;
  bool stop_ = false;
};

thread_local bool in_pool_job = false;

void Pool::drain() {
  const std::function<void(int)>* job = job_;
  int nb = nblocks_;
  int i;
  const bool was = in_pool_job;
  in_pool_job = true;  // nested parallel sections run inline
  while (job && (i = next_.fetch_add(1, std::memory_order_relaxed)) < nb) {
    (*job)(i);
    finished_.fetch_add(1, std::memory_order_release);
  }
  in_pool_job = was;
}

void gemm_block(Tr ta, Tr tb, int64_t m, int64_t n0, int64_t n1, int64_t k,
                const Real* A, int64_t lda, const Real* B, int64_t ldb,
                Real* C, int64_t ldc, bool accumulate) {
  const int64_t n = n1 - n0;
  MMap Cb(C + n0, m, n, Eigen::OuterStride<>(ldc));
  auto mul = [&](const auto& Am, const auto& Bm) {
    if (accumulate)
      Cb.noalias() += Am * Bm;
    else
      Cb.noalias() = Am * Bm;
  };
  if (ta == Tr::N && tb == Tr::N) {
    CMap Am(A, m, k, Eigen::OuterStride<>(lda));
    CMap Bm(B + n0, k, n, Eigen::OuterStride<>(ldb));
    mul(Am, Bm);
  } else if (ta == Tr::N && tb == Tr::T) {
    CMap Am(A, m, k, Eigen::OuterStride<>(lda));
    CMap Bm(B + n0 * ldb, n, k, Eigen::OuterStride<>(ldb));
    mul(Am, Bm.transpose());
  } else if (ta == Tr::T && tb == Tr::N) {
    CMap Am(A, k, m, Eigen::OuterStride<>(lda));
    CMap Bm(B + n0, k, n, Eigen::OuterStride<>(ldb));
    mul(Am.transpose(), Bm);
  } else {
    CMap Am(A, k, m, Eigen::OuterStride<>(lda));
    CMap Bm(B + n0 * ldb, n, k, Eigen::OuterStride<>(ldb));
    mul(Am.transpose(), Bm.transpose());
  }
}

}  // namespace

int pool_workers() { return Pool::get().workers() + 1; }

void parallel_blocks(int nblocks, const std::function<void(int)>& fn) {
  if (in_pool_job) {  // no nesting; run inline
    for (int i = 0; i < nblocks; ++i) fn(i);
    return;
  }
  in_pool_job = true;
  Pool::get().run(nblocks, fn);
  in_pool_job = false;
}

void gemm(Tr ta, Tr tb, int64_t m, int64_t n, int64_t k, const Real* A,
          int64_t lda, const Real* B, int64_t ldb, Real* C, int64_t ldc,
          bool accumulate) {
  if (m == 0 || n == 0) return;
  const double flops = 2.0 * double(m) * double(n) * double(k);
  constexpr int kBlocks = 4;  // fixed: partition must not depend on cores
  if (flops < 1.5e6 || n < kBlocks * 16 || in_pool_job) {
    gemm_block(ta, tb, m, 0, n, k, A, lda, B, ldb, C, ldc, accumulate);
    return;
  }
  parallel_blocks(kBlocks, [&](int b) {
    const int64_t n0 = n * b / kBlocks;
    const int64_t n1 = n * (b + 1) / kBlocks;
    gemm_block(ta, tb, m, n0, n1, k, A, lda, B, ldb, C, ldc, accumulate);
  });
}

}  // namespace octevo::detail
