#include "config.hpp"

#include "hal/error.hpp"
#include "hal/experiment.hpp"

#include <cstdlib>
#include <functional>
#include <map>

namespace hal::cli {

namespace {

std::vector<std::string> activation_names(const std::vector<nn::Activation>& acts) {
  std::vector<std::string> out;
  for (auto a : acts) out.emplace_back(nn::to_string(a));
  return out;
}

std::vector<nn::Activation> activations_from(const json& j) {
  std::vector<nn::Activation> out;
  for (const auto& s : j) out.push_back(nn::activation_from_string(s.get<std::string>()));
  return out;
}

using Setter = std::function<void(const json&)>;

void apply_section(const json& j, const std::string& where, const std::map<std::string, Setter>& setters) {
  if (!j.is_object()) throw Error(ErrorCode::Schema, where + " must be an object");
  for (const auto& [key, value] : j.items()) {
    const auto it = setters.find(key);
    if (it == setters.end()) throw Error(ErrorCode::Schema, "unknown config key '" + where + key + "'");
    try {
      it->second(value);
    } catch (const json::exception& e) {
      throw Error(ErrorCode::Schema, "config key '" + where + key + "': " + e.what());
    }
  }
}

template <typename T>
Setter set(T& field) {
  return [&field](const json& v) { field = v.get<T>(); };
}

}  // namespace

ExperimentConfig preset(const std::string& name) {
  ExperimentConfig c;
  if (name == "tcp-paper") {
    c.system = "tcp-reno";
    c.n_traj = 40;
    c.horizon = 200.0;
    c.solver = experiment::default_solver("tcp-reno");
    // Only the jump instants are cut.
    c.threshold = 1e12;
    c.model.n_modes = 10;
    c.train.iterations = 4000;
    c.train.batch_size = 128;
    c.folds = 5;
    c.n_test = 15;
    c.events.iterations = 4000;
    c.events.lr = 2e-3;
    return c;
  }
  if (name == "sls-ablation") {
    c.system = "sls";
    c.n_traj = 20;
    c.horizon = 10.0;
    c.solver = experiment::default_solver("sls");
    c.threshold = 1e12;
    c.model.n_modes = 4;
    c.model.per_step = true;
    c.model.encoder_hidden = {64, 64};
    c.model.encoder_activation = nn::Activation::SiLU;
    c.model.encoder_dropout = 0.0;
    c.train.iterations = 2000;
    c.train.encoder_lr = 1e-2;
    c.train.batch_size = 128;
    c.train.window = 10;
    c.train.fd_weight = 1.0;
    c.folds = 1;
    c.n_test = 0;
    return c;
  }
  throw Error(ErrorCode::InvalidArgument, "unknown preset '" + name + "' (expected tcp-paper or sls-ablation)");
}

void apply_json(ExperimentConfig& c, const json& j) {
  auto method = [&c](const json& v) {
    const auto s = v.get<std::string>();
    if (s == "rk4") {
      c.solver.method = Method::RK4;
    } else if (s == "dopri5") {
      c.solver.method = Method::DormandPrince;
    } else {
      throw Error(ErrorCode::Schema, "solver.method must be rk4 or dopri5");
    }
  };
  apply_section(j, "",
                {{"system", set(c.system)},
                 {"n_traj", set(c.n_traj)},
                 {"horizon", set(c.horizon)},
                 {"seed", set(c.seed)},
                 {"output_dir", [&c](const json& v) { c.output_dir = v.get<std::string>(); }},
                 {"solver",
                  [&](const json& v) {
                    apply_section(v, "solver.",
                                  {{"method", method},
                                   {"atol", set(c.solver.atol)},
                                   {"rtol", set(c.solver.rtol)},
                                   {"event_tol", set(c.solver.event_tol)},
                                   {"dt", [&c](const json& x) { c.solver.dt_init = x.get<double>(); }},
                                   {"output_dt", [&c](const json& x) { c.solver.output_dt = x.get<double>(); }}});
                  }},
                 {"segmentation",
                  [&](const json& v) {
                    apply_section(v, "segmentation.", {{"threshold", set(c.threshold)}, {"corrupt_p", set(c.corrupt_p)}});
                  }},
                 {"model",
                  [&](const json& v) {
                    auto& m = c.model;
                    apply_section(
                        v, "model.",
                        {{"n_modes", set(m.n_modes)},
                         {"latent",
                          [&m](const json& x) { m.latent = recovery::latent_kind_from_string(x.get<std::string>()); }},
                         {"encoder_hidden", set(m.encoder_hidden)},
                         {"encoder_activation",
                          [&m](const json& x) { m.encoder_activation = nn::activation_from_string(x.get<std::string>()); }},
                         {"encoder_dropout", set(m.encoder_dropout)},
                         {"field_hidden", set(m.field_hidden)},
                         {"field_activations", [&m](const json& x) { m.field_activations = activations_from(x); }},
                         {"anode_hidden", set(m.anode_hidden)},
                         {"anode_augment", set(m.anode_augment)},
                         {"per_step", set(m.per_step)}});
                  }},
                 {"train",
                  [&](const json& v) {
                    auto& t = c.train;
                    apply_section(v, "train.",
                                  {{"iterations", set(t.iterations)},
                                   {"encoder_lr", set(t.encoder_lr)},
                                   {"decoder_lr", set(t.decoder_lr)},
                                   {"batch_size", set(t.batch_size)},
                                   {"window", set(t.window)},
                                   {"fd_weight", set(t.fd_weight)},
                                   {"folds", set(c.folds)},
                                   {"n_test", set(c.n_test)},
                                   {"n_seeds", set(c.n_seeds)},
                                   {"baseline", set(c.baseline)},
                                   {"eps", set(c.eps)},
                                   {"min_pts", set(c.min_pts)},
                                   {"prune_threshold", set(c.prune_threshold)}});
                  }},
                 {"events", [&](const json& v) {
                    auto& e = c.events;
                    apply_section(v, "events.",
                                  {{"n_layers", set(e.flow.n_layers)},
                                   {"n_bins", set(e.flow.n_bins)},
                                   {"tail_bound", set(e.flow.tail_bound)},
                                   {"conditioner_hidden", set(e.flow.conditioner_hidden)},
                                   {"condition_on_state", set(e.condition_on_state)},
                                   {"jump_hidden", set(e.jump_hidden)},
                                   {"iterations", set(e.iterations)},
                                   {"lr", set(e.lr)},
                                   {"n_supervision", set(c.n_supervision)}});
                  }}});
}

json to_json(const ExperimentConfig& c) {
  json solver = {{"method", c.solver.method == Method::RK4 ? "rk4" : "dopri5"},
                 {"atol", c.solver.atol},
                 {"rtol", c.solver.rtol},
                 {"event_tol", c.solver.event_tol}};
  if (c.solver.dt_init) solver["dt"] = *c.solver.dt_init;
  if (c.solver.output_dt) solver["output_dt"] = *c.solver.output_dt;
  const auto& m = c.model;
  const auto& t = c.train;
  const auto& e = c.events;
  return {{"system", c.system},
          {"n_traj", c.n_traj},
          {"horizon", c.horizon},
          {"seed", c.seed},
          {"output_dir", c.output_dir.string()},
          {"solver", solver},
          {"segmentation", {{"threshold", c.threshold}, {"corrupt_p", c.corrupt_p}}},
          {"model",
           {{"n_modes", m.n_modes},
            {"latent", recovery::to_string(m.latent)},
            {"encoder_hidden", m.encoder_hidden},
            {"encoder_activation", nn::to_string(m.encoder_activation)},
            {"encoder_dropout", m.encoder_dropout},
            {"field_hidden", m.field_hidden},
            {"field_activations", activation_names(m.field_activations)},
            {"anode_hidden", m.anode_hidden},
            {"anode_augment", m.anode_augment},
            {"per_step", m.per_step}}},
          {"train",
           {{"iterations", t.iterations},
            {"encoder_lr", t.encoder_lr},
            {"decoder_lr", t.decoder_lr},
            {"batch_size", t.batch_size},
            {"window", t.window},
            {"fd_weight", t.fd_weight},
            {"folds", c.folds},
            {"n_test", c.n_test},
            {"n_seeds", c.n_seeds},
            {"baseline", c.baseline},
            {"eps", c.eps},
            {"min_pts", c.min_pts},
            {"prune_threshold", c.prune_threshold}}},
          {"events",
           {{"n_layers", e.flow.n_layers},
            {"n_bins", e.flow.n_bins},
            {"tail_bound", e.flow.tail_bound},
            {"conditioner_hidden", e.flow.conditioner_hidden},
            {"condition_on_state", e.condition_on_state},
            {"jump_hidden", e.jump_hidden},
            {"iterations", e.iterations},
            {"lr", e.lr},
            {"n_supervision", c.n_supervision}}}};
}

void apply_seed_override(ExperimentConfig& c) {
  const char* env = std::getenv("HAL_SEED");
  if (env == nullptr || *env == '\0') return;
  char* end = nullptr;
  const unsigned long long v = std::strtoull(env, &end, 10);
  if (end == env || *end != '\0') throw Error(ErrorCode::InvalidArgument, std::string("HAL_SEED is not an integer: ") + env);
  c.seed = v;
}

}  // namespace hal::cli
