#include "grala/image.hpp"

#include <algorithm>

namespace grala {

Mask dilate(const Mask& m, int radius) {
  if (radius <= 0) return m;
  // Separable max filter: rows then columns.
  Mask rows(m.width, m.height);
  for (int y = 0; y < m.height; ++y)
    for (int x = 0; x < m.width; ++x) {
      std::uint8_t v = 0;
      for (int dx = std::max(0, x - radius); dx <= std::min(m.width - 1, x + radius) && !v; ++dx) v = m.at(dx, y);
      rows.at(x, y) = v;
    }
  Mask out(m.width, m.height);
  for (int y = 0; y < m.height; ++y)
    for (int x = 0; x < m.width; ++x) {
      std::uint8_t v = 0;
      for (int dy = std::max(0, y - radius); dy <= std::min(m.height - 1, y + radius) && !v; ++dy) v = rows.at(x, dy);
      out.at(x, y) = v;
    }
  return out;
}

}  // namespace grala
