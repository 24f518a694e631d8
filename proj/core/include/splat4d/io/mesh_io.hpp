#pragma once

#include "splat4d/mesh.hpp"
#include "splat4d/mesh_sequence.hpp"

#include <filesystem>
#include <string>
#include <vector>

namespace splat4d::io {

/// Wavefront OBJ text (v, vt, f v/vt) referencing `mtl_name`.
[[nodiscard]] std::string encode_obj(const TexturedMesh& mesh, const std::string& mtl_name);
/// MTL with one unlit material whose map_Kd is `texture_name`.
[[nodiscard]] std::string encode_mtl(const std::string& texture_name);

/// Writes <dir>/frame_NNN.obj, .mtl and .png for every frame and returns
/// the OBJ paths. Creates `dir` if needed.
std::vector<std::filesystem::path> write_sequence(const std::filesystem::path& dir,
                                                  const TexturedMeshSequence& seq);

}  // namespace splat4d::io
