#pragma once

#include <cstddef>
#include <filesystem>
#include <string>
#include <vector>

#include "llr/format.hpp"
#include "llr/spectral.hpp"
#include "llr/trainer.hpp"

namespace llr {

enum class DType { F32, F64 };

struct ManifestLayer {
  std::string name;
  std::string role;
  std::size_t rows = 0;
  std::size_t cols = 0;
  DType dtype = DType::F64;
  std::string file;
  std::size_t byte_offset = 0;
};

struct Manifest {
  int version = 1;
  std::vector<ManifestLayer> layers;
};

/// Parses and validates a manifest document (names unique, known dtype).
Manifest parse_manifest(const std::string &text);

/// Reads every layer as f64, in manifest order. Byte ranges are checked
/// against file sizes and for overlap. Unrecognised role strings become
/// Other2D and are reported through `warnings`.
std::vector<WeightMatrix> load_manifest(const std::filesystem::path &path,
                                        std::vector<std::string> *warnings = nullptr);

/// Writes `mats` back to back into `dir/bin_name` and a manifest at
/// `dir/manifest_name`. Returns the manifest path.
std::filesystem::path save_manifest(const std::filesystem::path &dir,
                                    const std::vector<WeightMatrix> &mats,
                                    DType dtype,
                                    const std::string &manifest_name = "manifest.json",
                                    const std::string &bin_name = "weights.bin");

/// Training configuration from a JSON key/value document; absent keys keep
/// their defaults, unknown keys are a ParseError.
TrainConfig parse_train_config(const std::string &text);
TrainConfig load_train_config(const std::filesystem::path &path);

/// Canonical JSON rendering of every TrainConfig field.
std::string render_train_config(const TrainConfig &cfg);

std::string read_file(const std::filesystem::path &path);
void write_file(const std::filesystem::path &path, const std::string &text);

/// Minimal streaming JSON emitter with 17-significant-digit numbers;
/// non-finite numbers are written as the strings "inf", "-inf", "nan".
class JsonWriter {
public:
  JsonWriter &begin_object();
  JsonWriter &end_object();
  JsonWriter &begin_array();
  JsonWriter &end_array();
  JsonWriter &key(const std::string &k);
  JsonWriter &value(double v);
  JsonWriter &value(std::size_t v);
  JsonWriter &value(int v);
  JsonWriter &value(bool v);
  JsonWriter &value(const std::string &v);
  JsonWriter &value(const char *v) { return value(std::string(v)); }
  JsonWriter &null();

  std::string str() const { return out_ + "\n"; }

private:
  void separator();
  void indent();

  std::string out_;
  std::vector<bool> first_;
  bool after_key_ = false;
};

} // namespace llr
