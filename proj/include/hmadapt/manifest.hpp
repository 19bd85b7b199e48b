#pragma once

#include <filesystem>
#include <optional>
#include <string>
#include <vector>

#include "hmadapt/image.hpp"

namespace hmadapt {

enum class Class4 { normal, benign, high_risk, malignant };
enum class BinaryLabel { negative, positive };
enum class Split { train, val, test };

// normal/benign -> negative, high_risk/malignant -> positive.
BinaryLabel binary_label(Class4 c);

const char* to_string(Class4 c);
const char* to_string(Split s);
const char* to_string(BinaryLabel b);
Class4 class4_from_string(const std::string& s);
Split split_from_string(const std::string& s);

// One image of one patient. Serialized as one JSON object per line.
struct ManifestRecord {
  std::string image_path;  // relative to the dataset's image root
  Class4 class4 = Class4::normal;
  std::string patient_id;
  Split split = Split::train;
  std::optional<AnnotationBox> annotation;
};

// Annotation-count rule: high_risk and malignant records carry exactly one
// annotation, benign zero or one, normal zero. Throws DataError.
void validate_record(const ManifestRecord& record);

std::vector<ManifestRecord> read_manifest(const std::filesystem::path& path);
void write_manifest(const std::vector<ManifestRecord>& records,
                    const std::filesystem::path& path);

}  // namespace hmadapt
