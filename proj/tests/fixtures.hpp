// Copyright 2026 The previvor Authors
//
// Licensed under the Apache License, Version 2.0 (the "License");
// you may not use this file except in compliance with the License.
// You may obtain a copy of the License at
//
//     http://www.apache.org/licenses/LICENSE-2.0
//
// Unless required by applicable law or agreed to in writing, software
// distributed under the License is distributed on an "AS IS" BASIS,
// WITHOUT WARRANTIES OR CONDITIONS OF ANY KIND, either express or implied.
// See the License for the specific language governing permissions and
// limitations under the License.

#pragma once

// Small in-memory corpora for tests.

#include <vector>

#include "previvor/corpus.hpp"
#include "previvor/lumen.hpp"

namespace previvor::testing {

struct MemoryCorpus {
  std::vector<LabImage> clean;
  std::vector<LabImage> degraded;  // same order as clean
};

inline MemoryCorpus make_memory_corpus(int n, int size, std::uint64_t seed) {
  CorpusConfig cfg;
  cfg.synth.image_size = size;
  cfg.synth.seed = seed;
  MemoryCorpus mc;
  for (int i = 0; i < n; ++i) {
    Rng rng(mix_seed(seed, static_cast<std::uint64_t>(i)));
    const LabImage clean = generate_synthetic_painting(cfg.synth, rng);
    const RgbImage rgb = lab_to_rgb(clean);
    mc.clean.push_back(rgb_to_lab(rgb));
    mc.degraded.push_back(rgb_to_lab(degrade_image(rgb, cfg, rng).image));
  }
  return mc;
}

inline Plane l8(const LabImage& img, LumDomain d) { return luminance_8bit(img, d).values(); }

inline lumen::LumenData lumen_data(const MemoryCorpus& mc) {
  lumen::LumenData d;
  for (std::size_t i = 0; i < mc.clean.size(); ++i) {
    const Plane dg = l8(mc.degraded[i], LumDomain::real_degraded), cl = l8(mc.clean[i], LumDomain::non_degraded);
    d.real_degraded.push_back(dg);
    d.non_degraded.push_back(cl);
    d.pairs.emplace_back(dg, cl);
  }
  return d;
}

}  // namespace previvor::testing
