#pragma once

#include <algorithm>
#include <atomic>
#include <exception>
#include <functional>
#include <string>
#include <thread>
#include <vector>

namespace metalab::labcli {

/// Outcome of one task: empty error means success.
struct TaskStatus {
  std::string error;
  bool ok() const { return error.empty(); }
};

/// Runs task(i) for i in [0, n) on up to `workers` threads. Tasks write their
/// results into caller-owned slots, so ordering does not depend on scheduling.
inline std::vector<TaskStatus> parallel_for(std::size_t n, std::size_t workers,
                                            const std::function<void(std::size_t)>& task) {
  std::vector<TaskStatus> status(n);
  std::atomic<std::size_t> next{0};
  auto worker = [&]() {
    for (std::size_t i = next++; i < n; i = next++) {
      try {
        task(i);
      } catch (const std::exception& e) {
        status[i].error = e.what();
        if (status[i].error.empty()) status[i].error = "unknown failure";
      } catch (...) {
        status[i].error = "unknown failure";
      }
    }
  };
  const std::size_t threads = std::clamp<std::size_t>(workers, 1, std::max<std::size_t>(n, 1));
  if (threads == 1) {
    worker();
    return status;
  }
  std::vector<std::thread> pool;
  for (std::size_t t = 0; t < threads; ++t) pool.emplace_back(worker);
  for (auto& t : pool) t.join();
  return status;
}

}  // namespace metalab::labcli
