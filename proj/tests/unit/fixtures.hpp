#pragma once

#include <filesystem>
#include <optional>
#include <string>
#include <vector>

#include <unistd.h>

#include "driver_wm/data/synth.hpp"
#include "driver_wm/numerics/rng.hpp"
#include "driver_wm/numerics/tensor.hpp"

namespace dwm::testing {

inline SynthConfig tiny_synth(std::uint32_t D = 8, std::size_t n = 6) {
  SynthConfig c;
  c.dims.D = D;
  c.num_train = n;
  c.num_val = 0;
  c.num_test = 0;
  return c;
}

inline std::vector<Clip> tiny_clips(std::uint32_t D = 8, std::size_t n = 6, std::uint64_t seed = 3) {
  return synth_generate_corpus(tiny_synth(D, n), seed).corpus.clips;
}

inline Tensor random_matrix(std::size_t r, std::size_t c, Rng& rng, double scale = 1.0) {
  Tensor t = Tensor::matrix(r, c);
  for (std::size_t i = 0; i < t.size(); ++i) t[i] = scale * rng.normal();
  return t;
}

inline std::filesystem::path fresh_dir(const std::string& name) {
  auto p = std::filesystem::temp_directory_path() / ("dwm_test_" + std::to_string(::getpid()) + "_" + name);
  std::filesystem::remove_all(p);
  std::filesystem::create_directories(p);
  return p;
}

/// Code of the dwm::Error thrown by `f`, or nullopt when it returns normally.
template <class F>
std::optional<ErrorCode> error_code_of(F&& f) {
  try {
    f();
  } catch (const Error& e) {
    return e.code();
  }
  return std::nullopt;
}

/// Small train/val/test corpus for model-level tests (D = 16).
inline Corpus micro_corpus(std::uint64_t seed = 3, std::size_t train = 8, std::size_t val = 4, std::size_t test = 4) {
  SynthConfig c;
  c.dims.D = 16;
  c.num_train = train;
  c.num_val = val;
  c.num_test = test;
  return synth_generate_corpus(c, seed).corpus;
}

}  // namespace dwm::testing
