#include "support.hpp"

#include <map>
#include <mutex>

namespace testing {

const std::vector<dgmeval::synth_sample>& synth_cache(std::size_t n, std::uint64_t seed) {
  static std::map<std::pair<std::size_t, std::uint64_t>, std::vector<dgmeval::synth_sample>> cache;
  static std::mutex mu;
  std::lock_guard lock(mu);
  auto& slot = cache[{n, seed}];
  if (slot.empty()) {
    dgmeval::synth_options o;
    o.keep_labels = true;
    slot = dgmeval::synth_ensemble(n, {}, seed, o);
  }
  return slot;
}

}  // namespace testing
