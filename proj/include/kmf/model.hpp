#pragma once

#include <cstddef>
#include <string>
#include <string_view>
#include <variant>

#include "kmf/khronos.hpp"
#include "kmf/mlp.hpp"
#include "kmf/types.hpp"

namespace kmf {

enum class Family { khronos, mlp };

Family parse_family(std::string_view name);
std::string_view family_name(Family f);

/// Either surrogate family behind one value type.
using Model = std::variant<khronos::KhronosModel, mlp::MlpModel>;

Family family_of(const Model& m);
std::size_t parameter_count(const Model& m);
std::size_t input_dim(const Model& m);
std::size_t output_dim(const Model& m);
const NormStats& input_norm(const Model& m);
const NormStats& output_norm(const Model& m);

/// Normalized inputs -> normalized outputs.
RowMatrix forward_batch(const Model& m, const RowMatrix& inputs);
/// Raw inputs -> raw outputs.
RowMatrix predict_batch(const Model& m, const RowMatrix& raw_inputs);

/// Checkpoint document. KHRONOS parameters are one flat array ordered alphas [i][s][j],
/// gamma_raw [i], head [j][m], bias [m]; MLP layers each carry weights row-major
/// [fan_out][fan_in] and a bias vector. Doubles are written in shortest round-trip form.
std::string checkpoint_json(const Model& m);
Model model_from_json(const std::string& text);

void save_checkpoint(const std::string& path, const Model& m);
Model load_checkpoint(const std::string& path);

}  // namespace kmf
