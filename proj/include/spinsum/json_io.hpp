#ifndef SPINSUM_JSON_IO_HPP
#define SPINSUM_JSON_IO_HPP

#include <json.hpp>

#include "spinsum/nnet.hpp"

namespace spinsum {

nlohmann::json model_config_to_json_obj(const ModelConfig& config);

// Fields present in `j` override `base`; everything else keeps the profile
// default.
ModelConfig model_config_from_json_obj(const nlohmann::json& j, ModelConfig base);

}  // namespace spinsum

#endif
