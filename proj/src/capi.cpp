// Copyright 2026 The gradleak Authors
//
// Licensed under the Apache License, Version 2.0 (the "License");
// you may not use this file except in compliance with the License.
// You may obtain a copy of the License at
//
//      http://www.apache.org/licenses/LICENSE-2.0
//
// Unless required by applicable law or agreed to in writing, software
// distributed under the License is distributed on an "AS IS" BASIS,
// WITHOUT WARRANTIES OR CONDITIONS OF ANY KIND, either express or implied.
// See the License for the specific language governing permissions and
// limitations under the License.


#include "gradleak/gradleak.h"

#include <cstring>
#include <exception>
#include <new>
#include <string>

#include "gradleak/config.hpp"
#include "gradleak/error.hpp"
#include "gradleak/experiment.hpp"
#include "gradleak/metrics.hpp"
#include "gradleak/nn.hpp"

#ifndef GRADLEAK_VERSION
#define GRADLEAK_VERSION "0.0.0"
#endif

struct gl_config {
  gradleak::Config config;
};

struct gl_model {
  gradleak::Model model;
};

namespace {

thread_local std::string g_last_error;

gl_status Record(gl_status status, const std::string& message) {
  g_last_error = message;
  return status;
}

// Runs `body`, translating exceptions into a status and a stored message.
template <typename F>
gl_status Guard(F&& body) {
  try {
    g_last_error.clear();
    body();
    return GL_OK;
  } catch (const gradleak::Error& e) {
    return Record(static_cast<gl_status>(e.code()), e.what());
  } catch (const std::bad_alloc&) {
    return Record(GL_ERR_INTERNAL, "out of memory");
  } catch (const std::exception& e) {
    return Record(GL_ERR_INTERNAL, e.what());
  } catch (...) {
    return Record(GL_ERR_INTERNAL, "unknown exception");
  }
}

gl_status CopyOut(const std::string& s, char* buf, size_t cap, size_t* needed) {
  if (needed != nullptr) *needed = s.size() + 1;
  if (buf == nullptr && cap == 0) return GL_OK;
  if (buf == nullptr || cap < s.size() + 1) {
    return Record(GL_ERR_INVALID_ARGUMENT, "buffer of " + std::to_string(cap) +
                                               " bytes is too small; need " +
                                               std::to_string(s.size() + 1));
  }
  std::memcpy(buf, s.c_str(), s.size() + 1);
  return GL_OK;
}

#define GL_REQUIRE(cond)                                                   \
  do {                                                                     \
    if (!(cond)) return Record(GL_ERR_INVALID_ARGUMENT, "null argument: " #cond); \
  } while (0)

}  // namespace

extern "C" {

const char* gl_version(void) { return GRADLEAK_VERSION; }

const char* gl_status_name(gl_status status) {
  switch (status) {
    case GL_OK: return "ok";
    case GL_ERR_INVALID_ARGUMENT: return "invalid-argument";
    case GL_ERR_INTERNAL: return "internal";
    default: break;
  }
  if (status >= GL_ERR_SHAPE && status <= GL_ERR_IO) {
    return gradleak::ErrorCodeName(static_cast<gradleak::ErrorCode>(status));
  }
  return "unknown";
}

const char* gl_last_error(void) { return g_last_error.c_str(); }

gl_status gl_config_new(gl_config** out) {
  GL_REQUIRE(out != nullptr);
  *out = nullptr;
  return Guard([&] { *out = new gl_config{}; });
}

gl_status gl_config_load(const char* path, gl_config** out) {
  GL_REQUIRE(path != nullptr && out != nullptr);
  *out = nullptr;
  return Guard([&] { *out = new gl_config{gradleak::Config::Load(path)}; });
}

gl_status gl_config_parse(const char* text, gl_config** out) {
  GL_REQUIRE(text != nullptr && out != nullptr);
  *out = nullptr;
  return Guard([&] { *out = new gl_config{gradleak::Config::Parse(text)}; });
}

gl_status gl_config_set(gl_config* config, const char* key, const char* value) {
  GL_REQUIRE(config != nullptr && key != nullptr && value != nullptr);
  return Guard([&] { config->config.Set(key, value); });
}

gl_status gl_config_get(const gl_config* config, const char* key, char* buf, size_t cap,
                        size_t* needed) {
  GL_REQUIRE(config != nullptr && key != nullptr);
  std::string value;
  const gl_status st = Guard([&] { value = config->config.Get(key); });
  return st != GL_OK ? st : CopyOut(value, buf, cap, needed);
}

gl_status gl_config_resolved(const gl_config* config, char* buf, size_t cap, size_t* needed) {
  GL_REQUIRE(config != nullptr);
  std::string text;
  const gl_status st = Guard([&] { text = config->config.Resolved(); });
  return st != GL_OK ? st : CopyOut(text, buf, cap, needed);
}

gl_status gl_config_hash(const gl_config* config, char out[17]) {
  GL_REQUIRE(config != nullptr && out != nullptr);
  return Guard([&] { std::memcpy(out, config->config.Hash().c_str(), 17); });
}

void gl_config_free(gl_config* config) { delete config; }

gl_status gl_run(const gl_config* config, gl_run_summary* out) {
  GL_REQUIRE(config != nullptr && out != nullptr);
  return Guard([&] {
    const gradleak::ExperimentSummary s = gradleak::RunExperiment(config->config);
    out->kind = static_cast<gl_experiment_kind>(s.kind);
    out->items = s.items;
    out->failures = s.failures;
    out->mean_psnr_db = s.mean_psnr_db;
    out->mean_ssim = s.mean_ssim;
    out->mean_psnr_sensitive_db = s.mean_psnr_sensitive_db;
    out->mean_ssim_sensitive = s.mean_ssim_sensitive;
    out->final_accuracy = s.final_accuracy;
    std::memset(out->config_hash, 0, sizeof out->config_hash);
    std::memcpy(out->config_hash, s.config_hash.c_str(),
                std::min(s.config_hash.size(), sizeof out->config_hash - 1));
  });
}

gl_status gl_model_build(const char* arch, size_t height, size_t width, size_t channels,
                         size_t classes, uint64_t seed, gl_model** out) {
  GL_REQUIRE(arch != nullptr && out != nullptr);
  *out = nullptr;
  return Guard([&] {
    *out = new gl_model{gradleak::Model::Build(gradleak::ParseArch(arch),
                                               {height, width, channels}, classes, seed)};
  });
}

gl_status gl_model_save(const gl_model* model, const char* path) {
  GL_REQUIRE(model != nullptr && path != nullptr);
  return Guard([&] { gradleak::SaveParams(path, model->model.params()); });
}

gl_status gl_model_load(gl_model* model, const char* path) {
  GL_REQUIRE(model != nullptr && path != nullptr);
  return Guard([&] { model->model.set_params(gradleak::LoadParams(path)); });
}

gl_status gl_model_num_params(const gl_model* model, size_t* out) {
  GL_REQUIRE(model != nullptr && out != nullptr);
  *out = model->model.params().NumCoordinates();
  return Guard([] {});
}

gl_status gl_model_classes(const gl_model* model, size_t* out) {
  GL_REQUIRE(model != nullptr && out != nullptr);
  *out = model->model.classes();
  return Guard([] {});
}

gl_status gl_model_logits(const gl_model* model, const double* x, size_t n, double* out) {
  GL_REQUIRE(model != nullptr && x != nullptr && out != nullptr);
  return Guard([&] {
    const std::size_t d = model->model.input_size();
    gradleak::Tensor in({n, d}, std::vector<double>(x, x + n * d));
    const gradleak::Tensor logits = gradleak::Logits(model->model, in);
    std::memcpy(out, logits.data().data(), logits.size() * sizeof(double));
  });
}

void gl_model_free(gl_model* model) { delete model; }

gl_status gl_psnr(const double* reference, const double* candidate, size_t n, double* out) {
  GL_REQUIRE(reference != nullptr && candidate != nullptr && out != nullptr);
  return Guard([&] {
    *out = gradleak::Psnr(gradleak::Tensor({n}, std::vector<double>(reference, reference + n)),
                          gradleak::Tensor({n}, std::vector<double>(candidate, candidate + n)));
  });
}

gl_status gl_ssim(const double* reference, const double* candidate, size_t height, size_t width,
                  size_t channels, double* out) {
  GL_REQUIRE(reference != nullptr && candidate != nullptr && out != nullptr);
  return Guard([&] {
    const std::size_t n = height * width * channels;
    *out = gradleak::Ssim(gradleak::Tensor({n}, std::vector<double>(reference, reference + n)),
                          gradleak::Tensor({n}, std::vector<double>(candidate, candidate + n)),
                          {height, width, channels});
  });
}

}  // extern "C"
