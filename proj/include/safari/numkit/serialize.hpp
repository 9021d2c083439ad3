#pragma once

#include <nlohmann/json.hpp>

#include <string>
#include <vector>

#include "safari/errors.hpp"
#include "safari/numkit/mlp.hpp"

namespace safari::numkit {

using json = nlohmann::json;

inline constexpr int kMlpFormatVersion = 1;

inline json vector_to_json(const Vector& v) {
  return json(std::vector<double>(v.data(), v.data() + v.size()));
}

inline Vector vector_from_json(const json& j) {
  const auto values = j.get<std::vector<double>>();
  return Eigen::Map<const Vector>(values.data(), static_cast<Eigen::Index>(values.size()));
}

/// Layer specs plus row-major weight arrays, tagged with a format version.
inline json mlp_to_json(const MlpParams& params) {
  json layers = json::array();
  for (std::size_t k = 0; k < params.layers.size(); ++k) {
    const auto& spec = params.layers[k];
    std::vector<double> w;
    w.reserve(static_cast<std::size_t>(params.weights[k].size()));
    for (Eigen::Index r = 0; r < params.weights[k].rows(); ++r)
      for (Eigen::Index c = 0; c < params.weights[k].cols(); ++c) w.push_back(params.weights[k](r, c));
    layers.push_back({{"input_dim", spec.input_dim},
                      {"output_dim", spec.output_dim},
                      {"activation", std::string(to_string(spec.activation))},
                      {"weights", w},
                      {"bias", vector_to_json(params.biases[k])}});
  }
  return {{"format", "safari-mlp"}, {"version", kMlpFormatVersion}, {"layers", layers}};
}

inline MlpParams mlp_from_json(const json& j) {
  if (j.value("format", "") != "safari-mlp") throw ConfigError("not a safari-mlp document");
  if (j.value("version", 0) != kMlpFormatVersion)
    throw ConfigError("unsupported safari-mlp version " + std::to_string(j.value("version", 0)));
  MlpParams p;
  for (const auto& layer : j.at("layers")) {
    LayerSpec spec{layer.at("input_dim").get<int>(), layer.at("output_dim").get<int>(),
                   activation_from_string(layer.at("activation").get<std::string>())};
    if (spec.input_dim <= 0 || spec.output_dim <= 0) throw ShapeError("layer dimensions must be positive");
    const auto w = layer.at("weights").get<std::vector<double>>();
    if (w.size() != static_cast<std::size_t>(spec.input_dim) * static_cast<std::size_t>(spec.output_dim))
      throw ShapeError("weight array length does not match layer dims");
    Matrix m(spec.output_dim, spec.input_dim);
    std::size_t i = 0;
    for (Eigen::Index r = 0; r < m.rows(); ++r)
      for (Eigen::Index c = 0; c < m.cols(); ++c) m(r, c) = w[i++];
    p.layers.push_back(spec);
    p.weights.push_back(std::move(m));
    p.biases.push_back(vector_from_json(layer.at("bias")));
  }
  p.validate();
  if (!p.all_finite()) throw NumericError("serialized network contains non-finite values");
  return p;
}

} // namespace safari::numkit
