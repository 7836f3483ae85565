#include "tnd/parallel.hpp"

namespace tnd {

std::size_t resolve_threads(std::size_t threads) {
  if (threads > 0) return threads;
  const unsigned hw = std::thread::hardware_concurrency();
  return hw == 0 ? 1 : hw;
}

}  // namespace tnd
