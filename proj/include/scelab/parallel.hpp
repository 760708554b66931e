#pragma once

// Static-block parallel loop. Work item i always lands in the same block for
// a given thread count, and callers write results by index, so outputs do not
// depend on scheduling.

#include <algorithm>
#include <cstddef>
#include <exception>
#include <thread>
#include <vector>

namespace scelab {

inline unsigned default_threads() {
  const unsigned n = std::thread::hardware_concurrency();
  return n == 0 ? 1u : n;
}

/// Calls body(block, begin, end) for `threads` contiguous blocks of [0, n).
/// The exception thrown by the lowest-numbered failing block is rethrown.
template <class Body>
void parallel_blocks(std::size_t n, unsigned threads, Body&& body) {
  const std::size_t blocks = std::max<std::size_t>(1, std::min<std::size_t>(threads, n));
  std::vector<std::exception_ptr> errors(blocks);
  auto run = [&](std::size_t b) {
    const std::size_t begin = n * b / blocks;
    const std::size_t end = n * (b + 1) / blocks;
    try {
      body(b, begin, end);
    } catch (...) {
      errors[b] = std::current_exception();
    }
  };
  if (blocks == 1) {
    run(0);
  } else {
    std::vector<std::thread> pool;
    pool.reserve(blocks - 1);
    for (std::size_t b = 1; b < blocks; ++b) pool.emplace_back(run, b);
    run(0);
    for (auto& th : pool) th.join();
  }
  for (auto& e : errors)
    if (e) std::rethrow_exception(e);
}

template <class Body>
void parallel_for(std::size_t n, unsigned threads, Body&& body) {
  parallel_blocks(n, threads, [&](std::size_t, std::size_t begin, std::size_t end) {
    for (std::size_t i = begin; i < end; ++i) body(i);
  });
}

/// Number of blocks parallel_blocks will use.
inline std::size_t block_count(std::size_t n, unsigned threads) {
  return std::max<std::size_t>(1, std::min<std::size_t>(threads, n));
}

}  // namespace scelab
