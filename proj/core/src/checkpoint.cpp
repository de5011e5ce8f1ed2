#include "hal/checkpoint.hpp"

#include "hal/error.hpp"
#include "json_detail.hpp"

#include <fstream>
#include <sstream>

namespace hal {
namespace detail {

json to_json(const nn::ParamTensor& p) {
  json values = json::array();
  for (Eigen::Index c = 0; c < p.value.cols(); ++c) {
    for (Eigen::Index r = 0; r < p.value.rows(); ++r) values.push_back(p.value(r, c));
  }
  return {{"name", p.name}, {"rows", p.value.rows()}, {"cols", p.value.cols()}, {"values", std::move(values)}};
}

nn::ParamTensor param_from_json(const json& j) {
  try {
    const auto rows = j.at("rows").get<Eigen::Index>();
    const auto cols = j.at("cols").get<Eigen::Index>();
    const auto& values = j.at("values");
    if (rows < 0 || cols < 0 || static_cast<Eigen::Index>(values.size()) != rows * cols) {
      throw Error(ErrorCode::Schema, "tensor '" + j.value("name", std::string{}) + "' has inconsistent size");
    }
    nn::Matrix m(rows, cols);
    for (Eigen::Index k = 0; k < m.size(); ++k) m(k) = values[static_cast<std::size_t>(k)].get<double>();
    return nn::ParamTensor(j.at("name").get<std::string>(), std::move(m));
  } catch (const json::exception& e) {
    throw Error(ErrorCode::Schema, std::string("tensor: ") + e.what());
  }
}

json to_json(const nn::MlpSpec& spec) {
  json acts = json::array();
  for (auto a : spec.hidden_activations) acts.push_back(nn::to_string(a));
  return {{"layer_dims", spec.layer_dims},
          {"activation", nn::to_string(spec.activation)},
          {"hidden_activations", std::move(acts)},
          {"dropout", spec.dropout}};
}

nn::MlpSpec mlp_spec_from_json(const json& j) {
  try {
    nn::MlpSpec s;
    s.layer_dims = j.at("layer_dims").get<std::vector<int>>();
    s.activation = nn::activation_from_string(j.value("activation", std::string("relu")));
    if (j.contains("hidden_activations")) {
      for (const auto& a : j.at("hidden_activations")) s.hidden_activations.push_back(nn::activation_from_string(a));
    }
    if (j.contains("dropout")) s.dropout = j.at("dropout").get<std::vector<double>>();
    s.validate();
    return s;
  } catch (const json::exception& e) {
    throw Error(ErrorCode::Schema, std::string("mlp spec: ") + e.what());
  } catch (const Error& e) {
    throw Error(ErrorCode::Schema, std::string("mlp spec: ") + e.what());
  }
}

json to_json(const nn::Mlp& mlp) {
  json params = json::array();
  for (const auto& p : mlp.params()) params.push_back(to_json(p));
  return {{"spec", to_json(mlp.spec())}, {"params", std::move(params)}};
}

nn::Mlp mlp_from_json(const json& j) {
  try {
    std::vector<nn::ParamTensor> params;
    for (const auto& p : j.at("params")) params.push_back(param_from_json(p));
    return nn::Mlp(mlp_spec_from_json(j.at("spec")), std::move(params));
  } catch (const json::exception& e) {
    throw Error(ErrorCode::Schema, std::string("mlp: ") + e.what());
  } catch (const Error& e) {
    if (e.code() == ErrorCode::Schema) throw;
    throw Error(ErrorCode::Schema, std::string("mlp: ") + e.what());
  }
}

json to_json(const Eigen::VectorXd& v) {
  json out = json::array();
  for (Eigen::Index i = 0; i < v.size(); ++i) out.push_back(v[i]);
  return out;
}

Eigen::VectorXd vector_from_json(const json& j) {
  try {
    const auto vals = j.get<std::vector<double>>();
    return Eigen::Map<const Eigen::VectorXd>(vals.data(), static_cast<Eigen::Index>(vals.size()));
  } catch (const json::exception& e) {
    throw Error(ErrorCode::Schema, std::string("vector: ") + e.what());
  }
}

json parse(const std::string& text) {
  try {
    return json::parse(text);
  } catch (const json::parse_error& e) {
    throw Error(ErrorCode::Schema, e.what());
  }
}

}  // namespace detail

namespace nn {

std::string params_to_json(const std::vector<ParamTensor>& params) {
  detail::json arr = detail::json::array();
  for (const auto& p : params) arr.push_back(detail::to_json(p));
  return arr.dump();
}

std::vector<ParamTensor> params_from_json(const std::string& text) {
  const auto j = detail::parse(text);
  if (!j.is_array()) throw Error(ErrorCode::Schema, "expected an array of tensors");
  std::vector<ParamTensor> out;
  for (const auto& p : j) out.push_back(detail::param_from_json(p));
  return out;
}

std::string mlp_to_json(const Mlp& mlp) { return detail::to_json(mlp).dump(); }

Mlp mlp_from_json(const std::string& text) { return detail::mlp_from_json(detail::parse(text)); }

void write_text_file(const std::string& path, const std::string& text) {
  std::ofstream out(path, std::ios::binary);
  if (!out) throw Error(ErrorCode::Io, "cannot open '" + path + "' for writing");
  out << text;
  if (!out) throw Error(ErrorCode::Io, "write to '" + path + "' failed");
}

std::string read_text_file(const std::string& path) {
  std::ifstream in(path, std::ios::binary);
  if (!in) throw Error(ErrorCode::Io, "cannot open '" + path + "'");
  std::ostringstream ss;
  ss << in.rdbuf();
  return ss.str();
}

}  // namespace nn
}  // namespace hal
