#pragma once

// Shared plumbing: error types, deterministic RNG, intra-op thread pool,
// atomic file writes.

#include <atomic>
#include <cmath>
#include <condition_variable>
#include <cstdint>
#include <cstdlib>
#include <filesystem>
#include <fstream>
#include <functional>
#include <mutex>
#include <random>
#include <stdexcept>
#include <string>
#include <thread>
#include <vector>

namespace simtrack {

// Raised for invalid configuration or usage; the CLI maps it to exit code 2.
// Everything else that escapes is a runtime failure (exit code 1).
class ConfigError : public std::runtime_error {
 public:
  using std::runtime_error::runtime_error;
};

inline uint64_t splitmix64(uint64_t x) {
  x += 0x9e3779b97f4a7c15ull;
  x = (x ^ (x >> 30)) * 0xbf58476d1ce4e5b9ull;
  x = (x ^ (x >> 27)) * 0x94d049bb133111ebull;
  return x ^ (x >> 31);
}

// Derive an independent stream from a master seed. Used so that e.g. video k
// of a dataset is reproducible without generating videos 0..k-1.
inline uint64_t derive_seed(uint64_t master, uint64_t stream) {
  return splitmix64(master ^ splitmix64(stream + 0x51ed270b0f4a96a5ull));
}

// mt19937_64 with explicit bit-to-double transforms. std:: distributions are
// implementation-defined, which would break cross-toolchain reproducibility.
class Rng {
 public:
  explicit Rng(uint64_t seed) : gen_(seed) {}

  uint64_t bits() { return gen_(); }

  double uniform01() { return static_cast<double>(bits() >> 11) * 0x1.0p-53; }

  double uniform(double lo, double hi) { return lo + (hi - lo) * uniform01(); }

  // Inclusive on both ends.
  int uniform_int(int lo, int hi) {
    if (hi < lo) throw std::invalid_argument("uniform_int: hi < lo");
    uint64_t span = static_cast<uint64_t>(hi - lo) + 1;
    return lo + static_cast<int>(bits() % span);
  }

  double normal(double mean = 0.0, double stddev = 1.0) {
    double u1 = uniform01();
    if (u1 < 0x1.0p-53) u1 = 0x1.0p-53;
    double u2 = uniform01();
    double z = std::sqrt(-2.0 * std::log(u1)) * std::cos(6.283185307179586476925287 * u2);
    return mean + stddev * z;
  }

 private:
  std::mt19937_64 gen_;
};

// Fixed-chunk fork/join pool. Work item i is always executed as part of the
// same contiguous chunk regardless of thread count, and every output element
// is written by exactly one thread, so results are bitwise identical for any
// SIMTRACK_THREADS value. Each dispatch owns its job state via shared_ptr so
// a worker that wakes late touches only its own (already drained) job.
class ThreadPool {
 public:
  static ThreadPool& instance() {
    static ThreadPool pool;
    return pool;
  }

  int threads() {
    std::lock_guard<std::mutex> lk(api_mutex_);
    return n_threads_;
  }

  void set_threads(int n) {
    std::lock_guard<std::mutex> lk(api_mutex_);
    if (n < 1) n = 1;
    if (n == n_threads_) return;
    stop_workers();
    n_threads_ = n;
    start_workers();
  }

  // fn(begin, end) over a partition of [0, n). Runs serially when the pool
  // has one thread, the range is small, or we are already inside a worker.
  void parallel_for(int64_t n, int64_t grain,
                    const std::function<void(int64_t, int64_t)>& fn) {
    if (n <= 0) return;
    if (in_worker_ || n <= grain) {
      fn(0, n);
      return;
    }
    std::unique_lock<std::mutex> lk(api_mutex_);
    if (n_threads_ <= 1) {
      lk.unlock();
      fn(0, n);
      return;
    }
    int chunks = n_threads_;
    if (static_cast<int64_t>(chunks) > n) chunks = static_cast<int>(n);
    auto job = std::make_shared<Job>();
    job->fn = &fn;
    job->n = n;
    job->chunks = chunks;
    job->pending.store(chunks);
    {
      std::lock_guard<std::mutex> jk(job_mutex_);
      job_ = job;
    }
    cv_.notify_all();
    run_chunks(*job);
    {
      std::unique_lock<std::mutex> jk(job_mutex_);
      done_cv_.wait(jk, [&] { return job->pending.load() == 0; });
      if (job_ == job) job_.reset();
    }
  }

 private:
  struct Job {
    const std::function<void(int64_t, int64_t)>* fn = nullptr;
    int64_t n = 0;
    int chunks = 0;
    std::atomic<int> next{0};
    std::atomic<int> pending{0};
  };

  ThreadPool() {
    int n = 0;
    if (const char* env = std::getenv("SIMTRACK_THREADS")) {
      n = std::atoi(env);
    }
    if (n < 1) {
      unsigned hw = std::thread::hardware_concurrency();
      n = hw == 0 ? 1 : static_cast<int>(hw);
      if (n > 4) n = 4;
    }
    n_threads_ = n;
    start_workers();
  }

  ~ThreadPool() { stop_workers(); }

  void start_workers() {
    stop_ = false;
    for (int i = 1; i < n_threads_; ++i) {
      workers_.emplace_back([this] { worker_loop(); });
    }
  }

  void stop_workers() {
    {
      std::lock_guard<std::mutex> jk(job_mutex_);
      stop_ = true;
    }
    cv_.notify_all();
    for (auto& w : workers_) w.join();
    workers_.clear();
    stop_ = false;
  }

  void worker_loop() {
    in_worker_ = true;
    std::shared_ptr<Job> last;
    while (true) {
      std::shared_ptr<Job> job;
      {
        std::unique_lock<std::mutex> jk(job_mutex_);
        cv_.wait(jk, [&] { return stop_ || (job_ && job_ != last); });
        if (stop_) return;
        job = job_;
      }
      last = job;
      run_chunks(*job);
    }
  }

  // The caller waits on pending, and pending only reaches zero after every
  // claimed chunk has run, so job->fn outlives all uses.
  void run_chunks(Job& job) {
    while (true) {
      int c = job.next.fetch_add(1);
      if (c >= job.chunks) break;
      int64_t begin = job.n * c / job.chunks;
      int64_t end = job.n * (c + 1) / job.chunks;
      if (begin < end) (*job.fn)(begin, end);
      if (job.pending.fetch_sub(1) == 1) {
        std::lock_guard<std::mutex> jk(job_mutex_);
        done_cv_.notify_all();
      }
    }
  }

  std::mutex api_mutex_;
  std::mutex job_mutex_;
  std::condition_variable cv_;
  std::condition_variable done_cv_;
  std::vector<std::thread> workers_;
  std::shared_ptr<Job> job_;
  bool stop_ = false;
  int n_threads_ = 1;
  static thread_local bool in_worker_;
};

inline thread_local bool ThreadPool::in_worker_ = false;

inline void set_num_threads(int n) { ThreadPool::instance().set_threads(n); }

inline void parallel_for(int64_t n, int64_t grain,
                         const std::function<void(int64_t, int64_t)>& fn) {
  ThreadPool::instance().parallel_for(n, grain, fn);
}

// Write via temp + rename so interrupted runs never leave torn files.
inline void atomic_write_file(const std::filesystem::path& path,
                              const std::string& contents) {
  std::filesystem::path tmp = path;
  tmp += ".tmp";
  {
    std::ofstream out(tmp, std::ios::binary | std::ios::trunc);
    if (!out) throw std::runtime_error("cannot open for writing: " + tmp.string());
    out.write(contents.data(), static_cast<std::streamsize>(contents.size()));
    if (!out) throw std::runtime_error("write failed: " + tmp.string());
  }
  std::filesystem::rename(tmp, path);
}

inline std::string read_file(const std::filesystem::path& path) {
  std::ifstream in(path, std::ios::binary);
  if (!in) throw std::runtime_error("cannot open: " + path.string());
  std::string s((std::istreambuf_iterator<char>(in)),
                std::istreambuf_iterator<char>());
  return s;
}

}  // namespace simtrack
