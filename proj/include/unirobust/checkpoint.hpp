#pragma once

// Binary model checkpoints. Byte layout is documented in docs/checkpoint_format.md.

#include <filesystem>
#include <iosfwd>

#include "unirobust/model.hpp"

namespace unirobust {

void write_checkpoint(const Model& model, std::ostream& out);
Model read_checkpoint(std::istream& in);

void save_checkpoint(const Model& model, const std::filesystem::path& path);
Model load_checkpoint(const std::filesystem::path& path);

}  // namespace unirobust
