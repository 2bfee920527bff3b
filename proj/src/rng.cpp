#include "cvc/rng.hpp"

#include <numeric>
#include <sstream>
#include <stdexcept>

namespace cvc {

std::vector<int> sample_without_replacement(Rng& rng, int n, int k) {
  if (k > n || k < 0) throw std::invalid_argument("sample_without_replacement: k out of range");
  std::vector<int> pool(static_cast<std::size_t>(n));
  std::iota(pool.begin(), pool.end(), 0);
  for (int i = 0; i < k; ++i) {
    auto j = static_cast<int>(i + uniform_index(rng, static_cast<std::size_t>(n - i)));
    std::swap(pool[i], pool[j]);
  }
  pool.resize(static_cast<std::size_t>(k));
  return pool;
}

std::string serialize_rng(const Rng& rng) {
  std::ostringstream os;
  os << rng;
  return os.str();
}

Rng deserialize_rng(const std::string& state) {
  Rng rng;
  std::istringstream is(state);
  is >> rng;
  if (!is) throw std::runtime_error("corrupt generator state");
  return rng;
}

}  // namespace cvc
