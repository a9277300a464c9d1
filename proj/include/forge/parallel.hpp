#pragma once

#include <algorithm>
#include <exception>
#include <string>
#include <thread>
#include <vector>

#include "forge/random.hpp"

namespace forge {

/// Runs body(i) for every i, with item i owned by worker fnv1a64(keys[i]) % workers.
/// Each worker visits its items in index order. Results must be written to
/// per-index slots, so output never depends on the worker count. The first
/// exception (lowest worker) is rethrown after all workers join.
template <class Body>
void parallel_for_keys(const std::vector<std::string>& keys, int workers, Body&& body) {
  const std::size_t n = keys.size();
  workers = std::max(1, workers);
  if (workers == 1 || n < 2) {
    for (std::size_t i = 0; i < n; ++i) body(i);
    return;
  }
  std::vector<std::vector<std::size_t>> owned(static_cast<std::size_t>(workers));
  for (std::size_t i = 0; i < n; ++i) owned[fnv1a64(keys[i]) % std::size_t(workers)].push_back(i);
  std::vector<std::exception_ptr> errors(owned.size());
  std::vector<std::thread> threads;
  threads.reserve(owned.size());
  for (std::size_t w = 0; w < owned.size(); ++w) {
    threads.emplace_back([&, w] {
      try {
        for (std::size_t i : owned[w]) body(i);
      } catch (...) {
        errors[w] = std::current_exception();
      }
    });
  }
  for (auto& t : threads) t.join();
  for (auto& e : errors) {
    if (e) std::rethrow_exception(e);
  }
}

}  // namespace forge
