#include <doctest.h>

#include <cstring>
#include <filesystem>
#include <fstream>
#include <limits>

#include "llr/commands.hpp"
#include "llr/error.hpp"
#include "llr/io.hpp"
#include "oracles.hpp"

#include <json.hpp>

using namespace llr;
namespace fs = std::filesystem;

namespace {

fs::path scratch(const std::string &name) {
  const auto dir = fs::temp_directory_path() / ("llr_io_" + name);
  fs::remove_all(dir);
  fs::create_directories(dir);
  return dir;
}

std::vector<WeightMatrix> sample_mats() {
  auto a = testing::gaussian_matrix(12, 20, 1);
  a.name = "layers.0.att.q";
  a.role = Role::AttQ;
  auto b = testing::gaussian_matrix(30, 10, 2, 0.5);
  b.name = "embed";
  b.role = Role::Embedding;
  auto c = testing::gaussian_matrix(16, 16, 3, 2.0);
  c.name = "layers.0.ffn.down";
  c.role = Role::FfnDown;
  return {a, b, c};
}

ErrorCode code_of(auto &&fn) {
  try {
    fn();
  } catch (const Error &e) {
    return e.code();
  }
  FAIL("expected an llr::Error");
  return ErrorCode::IoError;
}

} // namespace

TEST_CASE("f64 manifests round-trip exactly") {
  const auto dir = scratch("f64");
  const auto mats = sample_mats();
  const auto path = save_manifest(dir, mats, DType::F64);
  const auto back = load_manifest(path);
  REQUIRE(back.size() == mats.size());
  for (std::size_t i = 0; i < mats.size(); ++i) {
    CHECK(back[i].name == mats[i].name);
    CHECK(back[i].role == mats[i].role);
    CHECK(back[i].rows == mats[i].rows);
    CHECK(back[i].values == mats[i].values);
  }
}

TEST_CASE("f32 manifests widen the stored floats") {
  const auto dir = scratch("f32");
  const auto mats = sample_mats();
  const auto back = load_manifest(save_manifest(dir, mats, DType::F32));
  for (std::size_t i = 0; i < mats.size(); ++i) {
    for (std::size_t j = 0; j < mats[i].values.size(); ++j) {
      CHECK(back[i].values[j] == static_cast<double>(static_cast<float>(mats[i].values[j])));
    }
  }
}

TEST_CASE("manifest validation") {
  const auto dir = scratch("bad");
  const auto mats = sample_mats();
  const auto path = save_manifest(dir, {mats[0], mats[2]}, DType::F64);

  auto doc = read_file(path);
  // Point the second layer at the first layer's bytes.
  const auto pos = doc.rfind("\"byte_offset\"");
  REQUIRE(pos != std::string::npos);
  const auto colon = doc.find(':', pos);
  const auto end = doc.find_first_of(",\n}", colon);
  auto overlapping = doc;
  overlapping.replace(colon + 1, end - colon - 1, " 8");
  write_file(dir / "overlap.json", overlapping);
  CHECK(code_of([&] { load_manifest(dir / "overlap.json"); }) == ErrorCode::ByteRangeError);

  auto past_end = doc;
  past_end.replace(colon + 1, end - colon - 1, " 1000000");
  write_file(dir / "past.json", past_end);
  CHECK(code_of([&] { load_manifest(dir / "past.json"); }) == ErrorCode::ByteRangeError);

  CHECK(code_of([] { parse_manifest("{not json"); }) == ErrorCode::ParseError);
  CHECK(code_of([&] { load_manifest(dir / "missing.json"); }) == ErrorCode::IoError);
}

TEST_CASE("unknown roles fall back with a warning") {
  const auto dir = scratch("role");
  auto mats = sample_mats();
  auto doc = read_file(save_manifest(dir, mats, DType::F64));
  const auto pos = doc.find("\"att.q\"");
  REQUIRE(pos != std::string::npos);
  doc.replace(pos, 7, "\"mystery\"");
  write_file(dir / "m.json", doc);
  std::vector<std::string> warnings;
  const auto back = load_manifest(dir / "m.json", &warnings);
  CHECK(back[0].role == Role::Other2D);
  CHECK(warnings.size() == 1);
}

TEST_CASE("analysis output is deterministic and matches the library") {
  const auto dir = scratch("det");
  const auto path = save_manifest(dir, sample_mats(), DType::F64);
  const auto mats = load_manifest(path);
  PlanConfig plan;
  plan.eta = 2e-3;
  const auto r1 = cmd_analyze(mats, FitConfig{}, plan);
  const auto r2 = cmd_analyze(load_manifest(path), FitConfig{}, plan);
  CHECK(render_report(r1) == render_report(r2));
  CHECK(render_plan(r1) == render_plan(r2));

  const auto doc = nlohmann::json::parse(render_report(r1));
  REQUIRE(doc["layers"].size() == mats.size());
  for (std::size_t i = 0; i < mats.size(); ++i) {
    const auto s = summarize(mats[i], FitConfig{});
    CHECK(doc["layers"][i]["alpha"].get<double>() == s.alpha);
    CHECK(doc["layers"][i]["lambda_max"].get<double>() == s.lambda_max);
  }
}

TEST_CASE("train configs round-trip through JSON") {
  TrainConfig c;
  c.steps = 321;
  c.optim.eta = 4e-3;
  c.optim.mode = LrMode::Llr;
  c.optim.plan_cfg.assignment = Assignment::LinearInverse;
  c.optim.schedule_cfg.base = BaseSchedule::Wsd;
  const auto text = render_train_config(c);
  const auto back = parse_train_config(text);
  CHECK(render_train_config(back) == text);
  CHECK(back.steps == 321);
  CHECK(back.optim.plan_cfg.assignment == Assignment::LinearInverse);
  CHECK(code_of([] { parse_train_config(R"({"stepz": 3})"); }) == ErrorCode::ParseError);
}

TEST_CASE("json writer formatting") {
  JsonWriter w;
  w.begin_object().key("x").value(0.1).key("inf").value(
      std::numeric_limits<double>::infinity());
  w.key("list").begin_array().value(1).value(2).end_array().end_object();
  const auto doc = nlohmann::json::parse(w.str());
  CHECK(doc["x"].get<double>() == 0.1);
  CHECK(doc["inf"] == "inf");
  CHECK(doc["list"].size() == 2);
}
