#pragma once

#include "hal/mlp.hpp"

#include <string>
#include <vector>

namespace hal::nn {

/// JSON text for a list of tensors: [{"name", "rows", "cols", "values"}].
/// Values round-trip bit-exactly.
[[nodiscard]] std::string params_to_json(const std::vector<ParamTensor>& params);
[[nodiscard]] std::vector<ParamTensor> params_from_json(const std::string& text);

/// {"spec": {...}, "params": [...]}
[[nodiscard]] std::string mlp_to_json(const Mlp& mlp);
[[nodiscard]] Mlp mlp_from_json(const std::string& text);

void write_text_file(const std::string& path, const std::string& text);
[[nodiscard]] std::string read_text_file(const std::string& path);

}  // namespace hal::nn
