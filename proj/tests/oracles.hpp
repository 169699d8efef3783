#pragma once

// Independent reference implementations used as test oracles.

#include <cstddef>
#include <cstdint>
#include <stack>
#include <vector>

namespace saol::test {

// 4-connected component sizes by an explicit-stack flood fill. `label` gets
// 1-based ids in raster order of each component's first pixel.
inline std::vector<std::size_t> flood_fill_sizes(const std::vector<std::uint8_t> &mask,
                                                 std::size_t h, std::size_t w,
                                                 std::vector<std::size_t> &label) {
  label.assign(h * w, 0);
  std::vector<std::size_t> sizes;
  for (std::size_t start = 0; start < h * w; ++start) {
    if (!mask[start] || label[start]) {
      continue;
    }
    sizes.push_back(0);
    const std::size_t id = sizes.size();
    std::stack<std::size_t> todo;
    todo.push(start);
    label[start] = id;
    while (!todo.empty()) {
      const std::size_t p = todo.top();
      todo.pop();
      ++sizes.back();
      const std::size_t y = p / w, x = p % w;
      const auto visit = [&](std::size_t q) {
        if (mask[q] && !label[q]) {
          label[q] = id;
          todo.push(q);
        }
      };
      if (y > 0) visit(p - w);
      if (y + 1 < h) visit(p + w);
      if (x > 0) visit(p - 1);
      if (x + 1 < w) visit(p + 1);
    }
  }
  return sizes;
}

} // namespace saol::test
