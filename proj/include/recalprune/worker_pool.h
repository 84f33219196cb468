/* Copyright 2026 The Recalprune Authors. All Rights Reserved.

Licensed under the Apache License, Version 2.0 (the "License");
you may not use this file except in compliance with the License.
You may obtain a copy of the License at

    http://www.apache.org/licenses/LICENSE-2.0

Unless required by applicable law or agreed to in writing, software
distributed under the License is distributed on an "AS IS" BASIS,
WITHOUT WARRANTIES OR CONDITIONS OF ANY KIND, either express or implied.
See the License for the specific language governing permissions and
limitations under the License.
==============================================================================*/

#ifndef RECALPRUNE_WORKER_POOL_H_
#define RECALPRUNE_WORKER_POOL_H_

#include <algorithm>
#include <atomic>
#include <condition_variable>
#include <exception>
#include <functional>
#include <mutex>
#include <optional>
#include <thread>
#include <vector>

namespace recalprune {

// Runs job(i) for i in [0, count) on up to `workers` threads and hands each
// result to commit(i, result) on the calling thread in increasing i. The
// committed sequence is therefore identical for every worker count. On the
// first exception no new jobs start, the completed prefix is still committed,
// and the exception is rethrown.
template <typename R>
void ordered_parallel_for(size_t count, int workers,
                          const std::function<R(size_t)>& job,
                          const std::function<void(size_t, R&)>& commit) {
  if (count == 0) return;
  const size_t threads =
      std::min<size_t>(count, static_cast<size_t>(std::max(1, workers)));
  if (threads == 1) {
    for (size_t i = 0; i < count; ++i) {
      R r = job(i);
      commit(i, r);
    }
    return;
  }
  std::vector<std::optional<R>> results(count);
  std::vector<bool> failed(count, false);
  std::exception_ptr error;
  std::mutex mu;
  std::condition_variable cv;
  std::atomic<size_t> next{0};
  std::atomic<bool> stop{false};

  auto worker = [&] {
    for (;;) {
      if (stop.load()) return;
      const size_t i = next.fetch_add(1);
      if (i >= count) return;
      try {
        R r = job(i);
        std::lock_guard<std::mutex> lock(mu);
        results[i] = std::move(r);
      } catch (...) {
        std::lock_guard<std::mutex> lock(mu);
        failed[i] = true;
        if (!error) error = std::current_exception();
        stop.store(true);
      }
      cv.notify_all();
    }
  };
  std::vector<std::thread> pool;
  for (size_t t = 0; t < threads; ++t) pool.emplace_back(worker);

  size_t committed = 0;
  std::exception_ptr commit_error;
  while (committed < count) {
    std::unique_lock<std::mutex> lock(mu);
    cv.wait(lock, [&] {
      return results[committed].has_value() || failed[committed] ||
             (stop.load() && next.load() <= committed);
    });
    if (!results[committed].has_value()) break;
    R r = std::move(*results[committed]);
    results[committed].reset();
    lock.unlock();
    try {
      commit(committed, r);
    } catch (...) {
      commit_error = std::current_exception();
      stop.store(true);
      break;
    }
    ++committed;
  }
  stop.store(true);
  for (std::thread& t : pool) t.join();
  if (commit_error) std::rethrow_exception(commit_error);
  if (error) std::rethrow_exception(error);
}

}  // namespace recalprune

#endif  // RECALPRUNE_WORKER_POOL_H_
