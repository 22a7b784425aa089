#pragma once

#include <filesystem>

#include "semdec/model.hpp"

namespace semdec {

/// Directory of manifest.json plus one little-endian float32 blob per tensor
/// (parameters, optimizer moments, prototype bank). Values are rounded to
/// float32 on save, so save∘load∘save is byte-identical to save.
void save_checkpoint(const TrainState& state, const std::filesystem::path& dir);
TrainState load_checkpoint(const std::filesystem::path& dir);

}  // namespace semdec
