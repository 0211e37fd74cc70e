// SPDX-License-Identifier: Apache-2.0
#include "upm/common.hpp"

#include <algorithm>
#include <thread>
#include <vector>

namespace upm {

void parallel_for(std::size_t n, unsigned workers,
                  const std::function<void(std::size_t, std::size_t)>& body) {
  if (n == 0) return;
  const std::size_t slices = std::clamp<std::size_t>(workers, 1, n);
  if (slices == 1) {
    body(0, n);
    return;
  }
  std::vector<std::jthread> threads;
  threads.reserve(slices - 1);
  const std::size_t step = n / slices;
  const std::size_t extra = n % slices;
  std::size_t begin = 0;
  std::size_t first_end = 0;
  for (std::size_t s = 0; s < slices; ++s) {
    const std::size_t end = begin + step + (s < extra ? 1 : 0);
    if (s == 0) {
      first_end = end;
    } else {
      threads.emplace_back([&body, begin, end] { body(begin, end); });
    }
    begin = end;
  }
  body(0, first_end);
}

}  // namespace upm
