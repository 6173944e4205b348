#pragma once

#include "gcnnlp/cohort.hpp"
#include "gcnnlp/geodesics.hpp"
#include "gcnnlp/model.hpp"

#include <vector>

namespace testing {

/// Small generated cohort with parameterized month-1 surfaces.
struct NetFixture {
  gcnnlp::synth::GeneratedCohort cohort;
  std::vector<gcnnlp::net::NetworkInputs> inputs;
  gcnnlp::net::NetworkConfig config;
};

/// Level 1 gives 42 vertices, level 2 gives 162.
inline gcnnlp::net::NetworkConfig tiny_config(int level) {
  gcnnlp::net::NetworkConfig c;
  c.channels = {4, 5, 4, 3, 3, 3};
  c.grid = {level <= 1 ? 12.0 : 6.0, 2, 3};
  c.max_updates = 10;
  c.schedule_switch = 10;
  c.learning_rate = 1e-3;
  return c;
}

inline NetFixture make_net_fixture(int level, int complete, int missing6, int missing3,
                                   gcnnlp::net::NetworkConfig config, std::uint64_t seed = 3) {
  gcnnlp::synth::CohortSpec spec;
  spec.subjects = complete + missing6 + missing3;
  spec.complete = complete;
  spec.missing6 = missing6;
  spec.missing3 = missing3;
  spec.level = level;
  spec.seed = seed;
  NetFixture fx{gcnnlp::synth::generate_cohort(spec), {}, config};
  for (const auto& s : fx.cohort.samples) {
    fx.inputs.push_back(gcnnlp::net::build_inputs(s, gcnnlp::geodesic::parameterize_surface(s.month1.inner, config.grid),
                                                  gcnnlp::geodesic::parameterize_surface(s.month1.outer, config.grid)));
  }
  return fx;
}

inline const gcnnlp::LongitudinalSample* find_sample(const NetFixture& fx, bool flag3, bool flag6,
                                                     std::size_t* index = nullptr) {
  for (std::size_t i = 0; i < fx.cohort.samples.size(); ++i) {
    const auto& s = fx.cohort.samples[i];
    if (s.flag3() == flag3 && s.flag6() == flag6) {
      if (index) *index = i;
      return &s;
    }
  }
  return nullptr;
}

}  // namespace testing
