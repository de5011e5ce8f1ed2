#pragma once

#include "hal/mlp.hpp"

#include <json.hpp>

namespace hal::detail {

using json = nlohmann::json;

json to_json(const nn::ParamTensor& p);
nn::ParamTensor param_from_json(const json& j);
json to_json(const nn::MlpSpec& spec);
nn::MlpSpec mlp_spec_from_json(const json& j);
json to_json(const nn::Mlp& mlp);
nn::Mlp mlp_from_json(const json& j);
json to_json(const Eigen::VectorXd& v);
Eigen::VectorXd vector_from_json(const json& j);

/// Parses text, rethrowing parse errors as Error(Schema).
json parse(const std::string& text);

}  // namespace hal::detail
