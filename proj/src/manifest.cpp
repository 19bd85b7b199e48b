#include "hmadapt/manifest.hpp"

#include <fstream>

#include <json.hpp>

#include "hmadapt/errors.hpp"

namespace hmadapt {

BinaryLabel binary_label(Class4 c) {
  switch (c) {
    case Class4::normal:
    case Class4::benign:
      return BinaryLabel::negative;
    case Class4::high_risk:
    case Class4::malignant:
      return BinaryLabel::positive;
  }
  throw std::invalid_argument("binary_label: bad class value");
}

const char* to_string(Class4 c) {
  switch (c) {
    case Class4::normal: return "normal";
    case Class4::benign: return "benign";
    case Class4::high_risk: return "high_risk";
    case Class4::malignant: return "malignant";
  }
  return "?";
}

const char* to_string(Split s) {
  switch (s) {
    case Split::train: return "train";
    case Split::val: return "val";
    case Split::test: return "test";
  }
  return "?";
}

const char* to_string(BinaryLabel b) {
  return b == BinaryLabel::positive ? "positive" : "negative";
}

Class4 class4_from_string(const std::string& s) {
  if (s == "normal") return Class4::normal;
  if (s == "benign") return Class4::benign;
  if (s == "high_risk") return Class4::high_risk;
  if (s == "malignant") return Class4::malignant;
  throw DataError("unknown class label: \"" + s + "\"");
}

Split split_from_string(const std::string& s) {
  if (s == "train") return Split::train;
  if (s == "val") return Split::val;
  if (s == "test") return Split::test;
  throw DataError("unknown split: \"" + s + "\"");
}

void validate_record(const ManifestRecord& record) {
  const bool has = record.annotation.has_value();
  switch (record.class4) {
    case Class4::normal:
      if (has) throw DataError(record.image_path + ": normal records carry no annotation");
      break;
    case Class4::benign:
      break;  // zero or one
    case Class4::high_risk:
    case Class4::malignant:
      if (!has)
        throw DataError(record.image_path + ": " + to_string(record.class4) +
                        " records require exactly one annotation");
      break;
  }
  if (record.image_path.empty()) throw DataError("record with empty image_path");
  if (record.patient_id.empty())
    throw DataError(record.image_path + ": record with empty patient_id");
}

namespace {

nlohmann::json record_to_json(const ManifestRecord& r) {
  nlohmann::json j;
  j["image_path"] = r.image_path;
  j["class4"] = to_string(r.class4);
  j["patient_id"] = r.patient_id;
  j["split"] = to_string(r.split);
  if (r.annotation) {
    j["annotation"] = {{"center_x", r.annotation->center_x},
                       {"center_y", r.annotation->center_y},
                       {"width", r.annotation->width},
                       {"height", r.annotation->height}};
  }
  return j;
}

ManifestRecord record_from_json(const nlohmann::json& j) {
  ManifestRecord r;
  r.image_path = j.at("image_path").get<std::string>();
  r.class4 = class4_from_string(j.at("class4").get<std::string>());
  r.patient_id = j.at("patient_id").get<std::string>();
  r.split = split_from_string(j.at("split").get<std::string>());
  if (j.contains("annotation") && !j["annotation"].is_null()) {
    const auto& a = j["annotation"];
    r.annotation = AnnotationBox{a.at("center_x").get<int>(), a.at("center_y").get<int>(),
                                 a.at("width").get<int>(), a.at("height").get<int>()};
  }
  return r;
}

}  // namespace

std::vector<ManifestRecord> read_manifest(const std::filesystem::path& path) {
  std::ifstream in(path);
  if (!in) throw IoError(path.string() + ": cannot open");
  std::vector<ManifestRecord> records;
  std::string line;
  std::size_t line_no = 0;
  while (std::getline(in, line)) {
    ++line_no;
    if (line.empty()) continue;
    nlohmann::json j;
    try {
      j = nlohmann::json::parse(line);
      records.push_back(record_from_json(j));
    } catch (const nlohmann::json::exception& e) {
      throw IoError(path.string() + ":" + std::to_string(line_no) + ": " + e.what());
    }
    validate_record(records.back());
  }
  return records;
}

void write_manifest(const std::vector<ManifestRecord>& records,
                    const std::filesystem::path& path) {
  std::ofstream out(path, std::ios::trunc);
  if (!out) throw IoError(path.string() + ": cannot open for writing");
  for (const auto& r : records) {
    validate_record(r);
    out << record_to_json(r).dump() << "\n";
  }
  if (!out) throw IoError(path.string() + ": write failed");
}

}  // namespace hmadapt
