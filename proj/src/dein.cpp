#include "ergo/dein.hpp"

#include <cmath>
#include <cstdio>

namespace ergo {

namespace {

// Noise substream ids: 0 is the init draw, layer n uses stream n + 1.
constexpr std::uint64_t kInitStream = 0;

std::string layer_key(int index, const char* field) {
  char buf[32];
  std::snprintf(buf, sizeof(buf), "layer%03d.%s", index, field);
  return buf;
}

void check_model(const DeinModel& model) {
  if (model.dim < 1) throw ContractViolation("DeinModel: dim must be >= 1");
  if (model.init.mean.size() != model.dim ||
      model.init.log_std.size() != model.dim) {
    throw ContractViolation("DeinModel: init dim mismatch");
  }
  for (const auto& layer : model.layers) {
    if (layer.dim() != model.dim) {
      throw ContractViolation("DeinModel: layer dim mismatch");
    }
  }
}

void check_noise(const DeinModel& model, const NoiseBatch& noise) {
  if (noise.r0.cols() != model.dim ||
      noise.momenta.size() != static_cast<size_t>(model.depth())) {
    throw ContractViolation("NoiseBatch: shape does not match model");
  }
  for (const auto& m : noise.momenta) {
    if (m.rows() != noise.r0.rows() || m.cols() != model.dim) {
      throw ContractViolation("NoiseBatch: momentum shape mismatch");
    }
  }
}

}  // namespace

DeinModel DeinModel::prefix(int n) const {
  if (n < 0 || n > depth()) {
    throw ContractViolation("DeinModel::prefix: depth out of range");
  }
  DeinModel out;
  out.init = init;
  out.dim = dim;
  out.layers.assign(layers.begin(), layers.begin() + n);
  return out;
}

ParamMap trainable_params(const DeinModel& model) {
  ParamMap params;
  if (model.init.trainable) {
    params["init.mean"] = model.init.mean;
    params["init.log_std"] = model.init.log_std;
  }
  for (int n = 0; n < model.depth(); ++n) {
    params[layer_key(n, "log_step")] = model.layers[n].log_step;
    params[layer_key(n, "log_mass")] = model.layers[n].log_mass;
  }
  return params;
}

void set_trainable_params(DeinModel& model, const ParamMap& params) {
  ParamMap expected = trainable_params(model);
  if (params.size() != expected.size()) {
    throw ContractViolation("set_trainable_params: parameter set mismatch");
  }
  for (const auto& [name, value] : params) {
    auto it = expected.find(name);
    if (it == expected.end() || it->second.size() != value.size()) {
      throw ContractViolation("set_trainable_params: unexpected entry '" +
                              name + "'");
    }
  }
  if (model.init.trainable) {
    model.init.mean = params.at("init.mean");
    model.init.log_std = params.at("init.log_std");
  }
  for (int n = 0; n < model.depth(); ++n) {
    model.layers[n].log_step = params.at(layer_key(n, "log_step"));
    model.layers[n].log_mass = params.at(layer_key(n, "log_mass"));
  }
}

int count_params(const DeinModel& model) {
  int total = model.init.trainable ? 2 * model.dim : 0;
  total += model.depth() * 2 * model.dim;
  return total;
}

NoiseBatch sample_noise(const DeinModel& model, int n, std::uint64_t seed) {
  check_model(model);
  if (n < 1) throw ContractViolation("sample_noise: n must be >= 1");

  NoiseBatch noise;
  noise.seed = seed;
  noise.r0.resize(n, model.dim);
  noise.momenta.assign(model.depth(), Mat(n, model.dim));

  for (int i = 0; i < n; ++i) {
    auto rng = substream_rng(seed, kInitStream, static_cast<std::uint64_t>(i));
    auto row = noise.r0.row(i);
    fill_standard_normal(rng, row);
  }
  for (int layer = 0; layer < model.depth(); ++layer) {
    for (int i = 0; i < n; ++i) {
      auto rng = substream_rng(seed, kInitStream + 1 + layer,
                               static_cast<std::uint64_t>(i));
      auto row = noise.momenta[layer].row(i);
      fill_standard_normal(rng, row);
    }
  }
  return noise;
}

void advance_through_layer(Mat& states, const LeapfrogLayer& layer,
                           const Mat& momentum_noise,
                           const TargetDensity& target,
                           std::vector<std::uint8_t>& diverged,
                           std::vector<LeapfrogTrace>* traces) {
  const Vec sqrt_mass = layer.mass().array().sqrt();
  const int n = static_cast<int>(states.rows());
  if (momentum_noise.rows() != n || momentum_noise.cols() != states.cols()) {
    throw ContractViolation("advance_through_layer: noise shape mismatch");
  }
  if (traces) traces->resize(n);

  for (int i = 0; i < n; ++i) {
    if (diverged[i]) continue;
    Vec z = states.row(i).transpose();
    Vec r = sqrt_mass.cwiseProduct(momentum_noise.row(i).transpose());
    try {
      if (traces) {
        LeapfrogResult res = leapfrog_forward(z, r, layer, target);
        states.row(i) = res.z.transpose();
        (*traces)[i] = std::move(res.trace);
      } else {
        auto [z_out, r_out] = leapfrog_endpoint(z, r, layer, target);
        states.row(i) = z_out.transpose();
      }
    } catch (const DivergenceError&) {
      diverged[i] = 1;
    }
  }
}

PushForward push_forward(const DeinModel& model, const NoiseBatch& noise,
                         const TargetDensity& target, bool keep_traces) {
  check_model(model);
  check_noise(model, noise);
  if (target.dim() != model.dim) {
    throw ContractViolation("push_forward: target dim mismatch");
  }

  const int n = noise.rows();
  PushForward out;
  out.diverged.assign(n, 0);

  // z0 = mean + exp(log_std) . r0, row-wise
  const Vec std = model.init.std();
  out.z0 = noise.r0.array().rowwise() * std.transpose().array();
  out.z0.rowwise() += model.init.mean.transpose();
  out.samples = out.z0;

  if (keep_traces) {
    out.traces.assign(n, std::vector<LeapfrogTrace>(model.depth()));
  }

  for (int layer = 0; layer < model.depth(); ++layer) {
    std::vector<LeapfrogTrace> layer_traces;
    advance_through_layer(out.samples, model.layers[layer],
                          noise.momenta[layer], target, out.diverged,
                          keep_traces ? &layer_traces : nullptr);
    if (keep_traces) {
      for (int i = 0; i < n; ++i) {
        if (!out.diverged[i]) out.traces[i][layer] = std::move(layer_traces[i]);
      }
    }
  }
  for (auto flag : out.diverged) out.n_divergent += flag;
  return out;
}

DeinModel build_model(const ModelSpec& spec, const TargetDensity& target) {
  if (spec.depth < 0) throw ContractViolation("ModelSpec: depth must be >= 0");
  if (spec.leaps < 1) throw ContractViolation("ModelSpec: leaps must be >= 1");
  if (spec.init_step <= 0.0) {
    throw ContractViolation("ModelSpec: init_step must be positive");
  }

  const int dim = target.dim();
  DeinModel model;
  model.dim = dim;
  model.init.trainable = spec.trainable_init;

  // Per-dimension scale heuristic from analytic moments when available.
  Vec scale = Vec::Ones(dim);
  Vec center = Vec::Zero(dim);
  if (target.stats()) {
    if (target.stats()->cov) {
      scale = target.stats()->cov->diagonal().array().sqrt();
    }
    if (target.stats()->mean) center = *target.stats()->mean;
  }

  model.init.mean = spec.init_mean ? *spec.init_mean : center;
  model.init.log_std =
      spec.init_log_std ? *spec.init_log_std : Vec((2.0 * scale.array()).log());
  if (model.init.mean.size() != dim || model.init.log_std.size() != dim) {
    throw ContractViolation("ModelSpec: init vector dim mismatch");
  }

  model.layers.assign(
      spec.depth, LeapfrogLayer::uniform(dim, spec.init_step, 1.0, spec.leaps));
  return model;
}

}  // namespace ergo
