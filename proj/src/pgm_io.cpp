#include "hmadapt/pgm_io.hpp"

#include <cstdio>
#include <fstream>
#include <string>

#include <json.hpp>

#include "hmadapt/errors.hpp"

namespace hmadapt {

namespace {

[[noreturn]] void fail(const std::filesystem::path& path, const std::string& what) {
  throw IoError(path.string() + ": " + what);
}

// Skips whitespace and '#' comment lines, then reads one unsigned decimal.
long read_header_int(std::istream& in) {
  int ch = in.get();
  for (;;) {
    while (ch != EOF && std::isspace(ch)) ch = in.get();
    if (ch == '#') {
      while (ch != EOF && ch != '\n') ch = in.get();
      continue;
    }
    break;
  }
  if (ch == EOF || !std::isdigit(ch)) return -1;
  long value = 0;
  while (ch != EOF && std::isdigit(ch)) {
    value = value * 10 + (ch - '0');
    if (value > 1 << 30) return -1;
    ch = in.get();
  }
  return value;
}

}  // namespace

Image2D read_pgm(const std::filesystem::path& path) {
  std::ifstream in(path, std::ios::binary);
  if (!in) fail(path, "cannot open");
  char magic[2] = {0, 0};
  in.read(magic, 2);
  if (!in || magic[0] != 'P' || magic[1] != '5') fail(path, "not a binary PGM (P5)");
  const long w = read_header_int(in);
  const long h = read_header_int(in);
  const long maxval = read_header_int(in);
  if (w < 1 || h < 1) fail(path, "bad dimensions in header");
  if (maxval < 1 || maxval > 65535) fail(path, "maxval out of range");
  // read_header_int consumed exactly one byte past maxval (the sample
  // separator), so raster data starts here.

  const std::size_t count = static_cast<std::size_t>(w) * h;
  const bool wide = maxval > 255;
  std::vector<std::uint16_t> pixels(count);
  if (wide) {
    std::vector<unsigned char> raw(count * 2);
    in.read(reinterpret_cast<char*>(raw.data()), static_cast<std::streamsize>(raw.size()));
    if (static_cast<std::size_t>(in.gcount()) != raw.size()) fail(path, "truncated raster");
    for (std::size_t i = 0; i < count; ++i)
      pixels[i] = static_cast<std::uint16_t>((raw[2 * i] << 8) | raw[2 * i + 1]);
  } else {
    std::vector<unsigned char> raw(count);
    in.read(reinterpret_cast<char*>(raw.data()), static_cast<std::streamsize>(raw.size()));
    if (static_cast<std::size_t>(in.gcount()) != raw.size()) fail(path, "truncated raster");
    for (std::size_t i = 0; i < count; ++i) pixels[i] = raw[i];
  }
  for (std::uint16_t p : pixels)
    if (p > maxval) fail(path, "sample value exceeds maxval");
  return Image2D::from_pixels(static_cast<int>(w), static_cast<int>(h),
                              static_cast<std::uint32_t>(maxval) + 1, std::move(pixels));
}

void write_pgm(const Image2D& img, const std::filesystem::path& path) {
  if (img.pixel_count() == 0) throw std::invalid_argument("write_pgm: empty image");
  std::ofstream out(path, std::ios::binary | std::ios::trunc);
  if (!out) fail(path, "cannot open for writing");
  const std::uint32_t maxval = img.levels() - 1;
  out << "P5\n" << img.width() << " " << img.height() << "\n" << maxval << "\n";
  if (maxval > 255) {
    std::vector<unsigned char> raw(img.pixels().size() * 2);
    for (std::size_t i = 0; i < img.pixels().size(); ++i) {
      raw[2 * i] = static_cast<unsigned char>(img.pixels()[i] >> 8);
      raw[2 * i + 1] = static_cast<unsigned char>(img.pixels()[i] & 0xff);
    }
    out.write(reinterpret_cast<const char*>(raw.data()), static_cast<std::streamsize>(raw.size()));
  } else {
    std::vector<unsigned char> raw(img.pixels().size());
    for (std::size_t i = 0; i < img.pixels().size(); ++i)
      raw[i] = static_cast<unsigned char>(img.pixels()[i]);
    out.write(reinterpret_cast<const char*>(raw.data()), static_cast<std::streamsize>(raw.size()));
  }
  if (!out) fail(path, "write failed");
}

Volume3D read_volume_dir(const std::filesystem::path& dir) {
  const auto sidecar = dir / "volume.json";
  std::ifstream in(sidecar);
  if (!in) fail(sidecar, "cannot open");
  nlohmann::json meta;
  try {
    in >> meta;
  } catch (const nlohmann::json::exception& e) {
    fail(sidecar, std::string("invalid JSON: ") + e.what());
  }
  if (!meta.contains("slices") || !meta["slices"].is_array() || meta["slices"].empty())
    fail(sidecar, "missing or empty \"slices\" list");
  Volume3D volume;
  for (const auto& name : meta["slices"]) {
    if (!name.is_string()) fail(sidecar, "slice names must be strings");
    volume.slices.push_back(read_pgm(dir / name.get<std::string>()));
  }
  if (meta.contains("levels")) {
    const auto levels = meta["levels"].get<std::uint32_t>();
    for (const auto& s : volume.slices)
      if (s.levels() != levels) fail(sidecar, "slice levels disagree with sidecar");
  }
  try {
    volume.validate();
  } catch (const std::invalid_argument& e) {
    fail(dir, e.what());
  }
  return volume;
}

void write_volume_dir(const Volume3D& volume, const std::filesystem::path& dir) {
  volume.validate();
  std::filesystem::create_directories(dir);
  nlohmann::json meta;
  meta["levels"] = volume.slices.front().levels();
  auto& names = meta["slices"] = nlohmann::json::array();
  for (std::size_t i = 0; i < volume.slices.size(); ++i) {
    char name[32];
    std::snprintf(name, sizeof(name), "slice_%04zu.pgm", i);
    write_pgm(volume.slices[i], dir / name);
    names.push_back(name);
  }
  std::ofstream out(dir / "volume.json", std::ios::trunc);
  if (!out) fail(dir / "volume.json", "cannot open for writing");
  out << meta.dump(2) << "\n";
}

}  // namespace hmadapt
