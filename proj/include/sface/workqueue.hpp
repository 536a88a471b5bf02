#pragma once

#include <condition_variable>
#include <cstdint>
#include <deque>
#include <functional>
#include <mutex>
#include <stdexcept>
#include <thread>
#include <vector>

namespace sface {

/**
 * @brief Bounded job queue with hard backpressure.
 *
 * `capacity` counts accepted-but-unfinished jobs (queued plus running); a
 * submit that would exceed it is rejected immediately rather than blocking,
 * so callers can shed load deterministically. Every submission is accounted
 * for exactly once: received == completed + failed + overloaded once the
 * queue is idle.
 */
class WorkQueue {
 public:
  struct Counters {
    std::uint64_t received = 0;
    std::uint64_t completed = 0;
    std::uint64_t failed = 0;      // job threw
    std::uint64_t overloaded = 0;  // rejected at capacity
  };

  WorkQueue(std::size_t capacity, std::size_t workers) : capacity_(capacity) {
    if (capacity == 0) throw std::invalid_argument("workqueue: capacity must be positive");
    if (workers == 0) throw std::invalid_argument("workqueue: need at least one worker");
    threads_.reserve(workers);
    for (std::size_t i = 0; i < workers; ++i) threads_.emplace_back([this] { run(); });
  }

  ~WorkQueue() { stop(); }

  WorkQueue(const WorkQueue&) = delete;
  WorkQueue& operator=(const WorkQueue&) = delete;

  /// Returns false (and counts the rejection) when the queue is at capacity.
  bool submit(std::function<void()> job) {
    if (!job) throw std::invalid_argument("workqueue: null job");
    {
      std::lock_guard lock(mu_);
      if (stopping_) throw std::logic_error("workqueue: submit after stop");
      ++counters_.received;
      if (pending_ == capacity_) {
        ++counters_.overloaded;
        return false;
      }
      ++pending_;
      jobs_.push_back(std::move(job));
    }
    cv_.notify_one();
    return true;
  }

  /// Accepted jobs not yet finished (queued + running).
  std::size_t queue_depth() const {
    std::lock_guard lock(mu_);
    return pending_;
  }

  Counters counters() const {
    std::lock_guard lock(mu_);
    return counters_;
  }

  /// Block until every accepted job has finished.
  void wait_idle() {
    std::unique_lock lock(mu_);
    idle_cv_.wait(lock, [this] { return pending_ == 0; });
  }

  /// Drain accepted jobs, then join the workers. Idempotent.
  void stop() {
    {
      std::lock_guard lock(mu_);
      if (stopping_) return;
      stopping_ = true;
    }
    cv_.notify_all();
    for (auto& t : threads_)
      if (t.joinable()) t.join();
  }

 private:
  void run() {
    for (;;) {
      std::function<void()> job;
      {
        std::unique_lock lock(mu_);
        cv_.wait(lock, [this] { return stopping_ || !jobs_.empty(); });
        if (jobs_.empty()) return;  // stopping and fully drained
        job = std::move(jobs_.front());
        jobs_.pop_front();
      }
      bool ok = true;
      try {
        job();
      } catch (...) {
        ok = false;
      }
      {
        std::lock_guard lock(mu_);
        ++(ok ? counters_.completed : counters_.failed);
        --pending_;
      }
      idle_cv_.notify_all();
    }
  }

  const std::size_t capacity_;
  mutable std::mutex mu_;
  std::condition_variable cv_;
  std::condition_variable idle_cv_;
  std::deque<std::function<void()>> jobs_;
  std::vector<std::thread> threads_;
  Counters counters_;
  std::size_t pending_ = 0;
  bool stopping_ = false;
};

}  // namespace sface
