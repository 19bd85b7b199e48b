#pragma once

#include <filesystem>

#include "hmadapt/image.hpp"

namespace hmadapt {

// Binary PGM (P5). Samples are one byte when maxval < 256, otherwise two
// bytes big-endian. maxval is written as levels-1.
Image2D read_pgm(const std::filesystem::path& path);
void write_pgm(const Image2D& img, const std::filesystem::path& path);

// A volume is a directory of PGM slices plus a `volume.json` sidecar that
// records slice order and the intensity level count.
Volume3D read_volume_dir(const std::filesystem::path& dir);
void write_volume_dir(const Volume3D& volume, const std::filesystem::path& dir);

}  // namespace hmadapt
