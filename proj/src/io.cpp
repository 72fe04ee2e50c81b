#include "llr/io.hpp"

#include <algorithm>
#include <bit>
#include <cmath>
#include <cstdint>
#include <cstdio>
#include <cstring>
#include <fstream>
#include <functional>
#include <map>
#include <set>
#include <sstream>

#include <json.hpp>

#include "llr/error.hpp"

namespace llr {

static_assert(std::endian::native == std::endian::little,
              "binary weight files are little-endian");

using nlohmann::json;

std::string format_double(double v) {
  if (std::isnan(v)) {
    return "nan";
  }
  if (std::isinf(v)) {
    return v > 0 ? "inf" : "-inf";
  }
  char buf[40];
  std::snprintf(buf, sizeof buf, "%.17g", v);
  return buf;
}

std::string read_file(const std::filesystem::path &path) {
  std::ifstream in(path, std::ios::binary);
  if (!in) {
    throw Error(ErrorCode::IoError, "cannot open " + path.string());
  }
  std::ostringstream ss;
  ss << in.rdbuf();
  return ss.str();
}

void write_file(const std::filesystem::path &path, const std::string &text) {
  std::ofstream out(path, std::ios::binary);
  if (!out) {
    throw Error(ErrorCode::IoError, "cannot write " + path.string());
  }
  out << text;
  if (!out) {
    throw Error(ErrorCode::IoError, "write failed for " + path.string());
  }
}

// ---------------------------------------------------------------- manifest

namespace {

json parse_json(const std::string &text) {
  try {
    return json::parse(text);
  } catch (const json::exception &e) {
    throw Error(ErrorCode::ParseError, std::string("malformed JSON: ") + e.what());
  }
}

template <typename T> T field(const json &obj, const char *name) {
  auto it = obj.find(name);
  if (it == obj.end()) {
    throw Error(ErrorCode::ParseError, std::string("missing field '") + name + "'");
  }
  try {
    return it->get<T>();
  } catch (const json::exception &) {
    throw Error(ErrorCode::ParseError, std::string("field '") + name + "' has the wrong type");
  }
}

std::size_t dtype_size(DType d) { return d == DType::F32 ? 4 : 8; }

} // namespace

Manifest parse_manifest(const std::string &text) {
  const json doc = parse_json(text);
  if (!doc.is_object()) {
    throw Error(ErrorCode::ParseError, "manifest must be a JSON object");
  }
  Manifest m;
  m.version = field<int>(doc, "version");
  if (m.version != 1) {
    throw Error(ErrorCode::ParseError, "unsupported manifest version " + std::to_string(m.version));
  }
  const json layers = field<json>(doc, "layers");
  if (!layers.is_array()) {
    throw Error(ErrorCode::ParseError, "'layers' must be an array");
  }
  std::set<std::string> names;
  for (const auto &entry : layers) {
    ManifestLayer l;
    l.name = field<std::string>(entry, "name");
    l.role = field<std::string>(entry, "role");
    l.rows = field<std::size_t>(entry, "rows");
    l.cols = field<std::size_t>(entry, "cols");
    const auto dtype = field<std::string>(entry, "dtype");
    if (dtype == "f32") {
      l.dtype = DType::F32;
    } else if (dtype == "f64") {
      l.dtype = DType::F64;
    } else {
      throw Error(ErrorCode::ParseError, "unknown dtype '" + dtype + "'");
    }
    l.file = field<std::string>(entry, "file");
    l.byte_offset = field<std::size_t>(entry, "byte_offset");
    if (l.rows == 0 || l.cols == 0) {
      throw Error(ErrorCode::ParseError, "'" + l.name + "' has an empty shape");
    }
    if (!names.insert(l.name).second) {
      throw Error(ErrorCode::ParseError, "duplicate layer name '" + l.name + "'");
    }
    m.layers.push_back(std::move(l));
  }
  return m;
}

std::vector<WeightMatrix> load_manifest(const std::filesystem::path &path,
                                        std::vector<std::string> *warnings) {
  const Manifest manifest = parse_manifest(read_file(path));
  const auto base = path.parent_path();

  // Byte ranges per file must lie inside the file and must not overlap.
  std::map<std::string, std::vector<std::pair<std::size_t, std::size_t>>> ranges;
  std::map<std::string, std::string> contents;
  for (const auto &l : manifest.layers) {
    if (!contents.count(l.file)) {
      contents[l.file] = read_file(base / l.file);
    }
    const std::size_t bytes = l.rows * l.cols * dtype_size(l.dtype);
    if (l.byte_offset + bytes > contents[l.file].size()) {
      throw Error(ErrorCode::ByteRangeError,
                  "'" + l.name + "' reads past the end of " + l.file);
    }
    ranges[l.file].push_back({l.byte_offset, l.byte_offset + bytes});
  }
  for (auto &[file, rs] : ranges) {
    std::sort(rs.begin(), rs.end());
    for (std::size_t i = 1; i < rs.size(); ++i) {
      if (rs[i].first < rs[i - 1].second) {
        throw Error(ErrorCode::ByteRangeError, "overlapping byte ranges in " + file);
      }
    }
  }

  std::vector<WeightMatrix> out;
  out.reserve(manifest.layers.size());
  for (const auto &l : manifest.layers) {
    Role role = Role::Other2D;
    if (auto r = parse_role(l.role)) {
      role = *r;
    } else if (warnings) {
      warnings->push_back("unknown role '" + l.role + "' for '" + l.name +
                          "', treating as " + std::string(role_name(Role::Other2D)));
    }
    const std::string &data = contents[l.file];
    const std::size_t count = l.rows * l.cols;
    std::vector<double> values(count);
    const char *src = data.data() + l.byte_offset;
    if (l.dtype == DType::F64) {
      std::memcpy(values.data(), src, count * sizeof(double));
    } else {
      for (std::size_t i = 0; i < count; ++i) {
        float f;
        std::memcpy(&f, src + i * sizeof(float), sizeof(float));
        values[i] = static_cast<double>(f);
      }
    }
    out.emplace_back(l.name, role, l.rows, l.cols, std::move(values));
  }
  return out;
}

std::filesystem::path save_manifest(const std::filesystem::path &dir,
                                    const std::vector<WeightMatrix> &mats,
                                    DType dtype, const std::string &manifest_name,
                                    const std::string &bin_name) {
  std::filesystem::create_directories(dir);
  std::string blob;
  JsonWriter w;
  w.begin_object().key("version").value(1).key("layers").begin_array();
  for (const auto &m : mats) {
    const std::size_t offset = blob.size();
    for (double v : m.values) {
      if (dtype == DType::F64) {
        blob.append(reinterpret_cast<const char *>(&v), sizeof v);
      } else {
        const auto f = static_cast<float>(v);
        blob.append(reinterpret_cast<const char *>(&f), sizeof f);
      }
    }
    w.begin_object()
        .key("name").value(m.name)
        .key("role").value(std::string(role_name(m.role)))
        .key("rows").value(m.rows)
        .key("cols").value(m.cols)
        .key("dtype").value(dtype == DType::F64 ? "f64" : "f32")
        .key("file").value(bin_name)
        .key("byte_offset").value(offset)
        .end_object();
  }
  w.end_array().end_object();
  write_file(dir / bin_name, blob);
  write_file(dir / manifest_name, w.str());
  return dir / manifest_name;
}

// ------------------------------------------------------------ train config

namespace {

// Reads known keys out of one JSON object and rejects the rest.
class Section {
public:
  Section(const json &obj, std::string name) : obj_(obj), name_(std::move(name)) {
    if (!obj_.is_object()) {
      throw Error(ErrorCode::ParseError, "'" + name_ + "' must be an object");
    }
  }

  template <typename T> void get(const char *key, T &out) {
    seen_.insert(key);
    auto it = obj_.find(key);
    if (it == obj_.end()) {
      return;
    }
    try {
      out = it->get<T>();
    } catch (const json::exception &) {
      throw Error(ErrorCode::ParseError, "'" + name_ + "." + key + "' has the wrong type");
    }
  }

  template <typename E>
  void get_enum(const char *key, E &out,
                const std::function<std::optional<E>(std::string_view)> &parse) {
    std::string text;
    seen_.insert(key);
    auto it = obj_.find(key);
    if (it == obj_.end()) {
      return;
    }
    get(key, text);
    auto v = parse(text);
    if (!v) {
      throw Error(ErrorCode::ParseError, "'" + name_ + "." + key + "': unknown value '" + text + "'");
    }
    out = *v;
  }

  const json *child(const char *key) {
    seen_.insert(key);
    auto it = obj_.find(key);
    return it == obj_.end() ? nullptr : &*it;
  }

  void finish() const {
    for (auto it = obj_.begin(); it != obj_.end(); ++it) {
      if (!seen_.count(it.key())) {
        throw Error(ErrorCode::ParseError, "unknown key '" + name_ + "." + it.key() + "'");
      }
    }
  }

private:
  const json &obj_;
  std::string name_;
  std::set<std::string> seen_;
};

std::optional<Precision> parse_precision(std::string_view s) {
  if (s == "f32") return Precision::F32;
  if (s == "f64") return Precision::F64;
  return std::nullopt;
}

std::optional<CorpusKind> parse_corpus(std::string_view s) {
  if (s == "markov") return CorpusKind::MarkovChars;
  if (s == "modular_copy") return CorpusKind::ModularCopy;
  return std::nullopt;
}

std::optional<SwitchMode> parse_switch(std::string_view s) {
  if (s == "soft") return SwitchMode::Soft;
  if (s == "hard") return SwitchMode::Hard;
  return std::nullopt;
}

} // namespace

TrainConfig parse_train_config(const std::string &text) {
  const json doc = parse_json(text);
  TrainConfig cfg;
  Section top(doc, "config");
  top.get("steps", cfg.steps);
  top.get("batch_size", cfg.batch_size);
  top.get("warmup_fraction", cfg.warmup_fraction);
  top.get("eval_batches", cfg.eval_batches);
  top.get("holdout_fraction", cfg.holdout_fraction);
  top.get("sample_seed", cfg.sample_seed);
  top.get_enum<Precision>("precision", cfg.precision, parse_precision);

  if (const json *m = top.child("model")) {
    Section s(*m, "model");
    s.get("vocab", cfg.model.vocab);
    s.get("d_model", cfg.model.d_model);
    s.get("n_layers", cfg.model.n_layers);
    s.get("n_heads", cfg.model.n_heads);
    s.get("ffn_mult", cfg.model.ffn_mult);
    s.get("context", cfg.model.context);
    s.get("seed", cfg.model.seed);
    s.get("tie_output_head", cfg.model.tie_output_head);
    s.get("init_std", cfg.model.init_std);
    s.finish();
  }
  if (const json *o = top.child("optim")) {
    Section s(*o, "optim");
    s.get_enum<OptimizerKind>("optimizer", cfg.optim.optimizer, parse_optimizer);
    s.get("eta", cfg.optim.eta);
    s.get("beta1", cfg.optim.beta1);
    s.get("beta2", cfg.optim.beta2);
    s.get("eps", cfg.optim.eps);
    s.get("weight_decay", cfg.optim.weight_decay);
    s.get("grad_clip", cfg.optim.grad_clip);
    s.get("lamb_clip", cfg.optim.lamb_clip);
    s.get_enum<LrMode>("mode", cfg.optim.mode, parse_lr_mode);
    s.finish();
  }
  if (const json *p = top.child("plan")) {
    Section s(*p, "plan");
    s.get("s", cfg.optim.plan_cfg.s);
    s.get_enum<Assignment>("assignment", cfg.optim.plan_cfg.assignment, parse_assignment);
    s.get("embedding_override", cfg.optim.plan_cfg.embedding_override);
    s.get("clamp_mean_normalized", cfg.optim.plan_cfg.clamp_mean_normalized);
    s.finish();
  }
  if (const json *sc = top.child("schedule")) {
    Section s(*sc, "schedule");
    auto &c = cfg.optim.schedule_cfg;
    s.get_enum<BaseSchedule>("base", c.base, parse_base_schedule);
    s.get("recompute_interval", c.recompute_interval);
    s.get("t_switch", c.t_switch);
    s.get("active_fraction", c.active_fraction);
    s.get_enum<SwitchMode>("switch_mode", c.switch_mode, parse_switch);
    s.get("min_lr_fraction", c.min_lr_fraction);
    s.get("wsd_stable_fraction", c.wsd_stable_fraction);
    s.finish();
  }
  if (const json *d = top.child("data")) {
    Section s(*d, "data");
    s.get_enum<CorpusKind>("kind", cfg.data.kind, parse_corpus);
    s.get("seed", cfg.data.seed);
    s.get("length", cfg.data.length);
    s.get("sharpness", cfg.data.sharpness);
    s.get("skip_weight", cfg.data.skip_weight);
    s.get("smoothing", cfg.data.smoothing);
    s.get("copy_block", cfg.data.copy_block);
    s.finish();
  }
  if (const json *f = top.child("fit")) {
    Section s(*f, "fit");
    s.get_enum<FitMethod>("method", cfg.fit.method, parse_fit_method);
    std::size_t k = 0;
    s.get("k_override", k);
    if (k > 0) {
      cfg.fit.k_override = k;
    }
    s.get("histogram_bins", cfg.fit.histogram_bins);
    s.finish();
  }
  top.finish();

  cfg.data.vocab = cfg.model.vocab;
  cfg.optim.plan_cfg.eta = cfg.optim.eta;
  return cfg;
}

TrainConfig load_train_config(const std::filesystem::path &path) {
  return parse_train_config(read_file(path));
}

std::string render_train_config(const TrainConfig &cfg) {
  const auto &m = cfg.model;
  const auto &o = cfg.optim;
  const auto &p = o.plan_cfg;
  const auto &s = o.schedule_cfg;
  const auto &d = cfg.data;
  JsonWriter w;
  w.begin_object()
      .key("steps").value(cfg.steps)
      .key("batch_size").value(cfg.batch_size)
      .key("warmup_fraction").value(cfg.warmup_fraction)
      .key("eval_batches").value(cfg.eval_batches)
      .key("holdout_fraction").value(cfg.holdout_fraction)
      .key("sample_seed").value(static_cast<std::size_t>(cfg.sample_seed))
      .key("precision").value(cfg.precision == Precision::F64 ? "f64" : "f32");
  w.key("model").begin_object()
      .key("vocab").value(m.vocab)
      .key("d_model").value(m.d_model)
      .key("n_layers").value(m.n_layers)
      .key("n_heads").value(m.n_heads)
      .key("ffn_mult").value(m.ffn_mult)
      .key("context").value(m.context)
      .key("seed").value(static_cast<std::size_t>(m.seed))
      .key("tie_output_head").value(m.tie_output_head)
      .key("init_std").value(m.init_std)
      .end_object();
  w.key("optim").begin_object()
      .key("optimizer").value(std::string(optimizer_name(o.optimizer)))
      .key("eta").value(o.eta)
      .key("beta1").value(o.beta1)
      .key("beta2").value(o.beta2)
      .key("eps").value(o.eps)
      .key("weight_decay").value(o.weight_decay)
      .key("grad_clip").value(o.grad_clip)
      .key("lamb_clip").value(o.lamb_clip)
      .key("mode").value(std::string(lr_mode_name(o.mode)))
      .end_object();
  w.key("plan").begin_object()
      .key("s").value(p.s)
      .key("assignment").value(std::string(assignment_name(p.assignment)))
      .key("embedding_override").value(p.embedding_override)
      .key("clamp_mean_normalized").value(p.clamp_mean_normalized)
      .end_object();
  w.key("schedule").begin_object()
      .key("base").value(std::string(base_schedule_name(s.base)))
      .key("recompute_interval").value(s.recompute_interval)
      .key("t_switch").value(s.t_switch)
      .key("active_fraction").value(s.active_fraction)
      .key("switch_mode").value(s.switch_mode == SwitchMode::Hard ? "hard" : "soft")
      .key("min_lr_fraction").value(s.min_lr_fraction)
      .key("wsd_stable_fraction").value(s.wsd_stable_fraction)
      .end_object();
  w.key("data").begin_object()
      .key("kind").value(d.kind == CorpusKind::ModularCopy ? "modular_copy" : "markov")
      .key("seed").value(static_cast<std::size_t>(d.seed))
      .key("length").value(d.length)
      .key("sharpness").value(d.sharpness)
      .key("skip_weight").value(d.skip_weight)
      .key("smoothing").value(d.smoothing)
      .key("copy_block").value(d.copy_block)
      .end_object();
  w.key("fit").begin_object()
      .key("method").value(std::string(fit_method_name(cfg.fit.method)))
      .key("k_override").value(cfg.fit.k_override.value_or(0))
      .key("histogram_bins").value(cfg.fit.histogram_bins)
      .end_object();
  w.end_object();
  return w.str();
}

// -------------------------------------------------------------- JsonWriter

void JsonWriter::indent() {
  out_ += '\n';
  out_.append(2 * first_.size(), ' ');
}

void JsonWriter::separator() {
  if (after_key_) {
    after_key_ = false;
    return;
  }
  if (!first_.empty()) {
    if (!first_.back()) {
      out_ += ',';
    }
    first_.back() = false;
    indent();
  }
}

JsonWriter &JsonWriter::begin_object() {
  separator();
  out_ += '{';
  first_.push_back(true);
  return *this;
}

JsonWriter &JsonWriter::end_object() {
  const bool empty = first_.back();
  first_.pop_back();
  if (!empty) {
    indent();
  }
  out_ += '}';
  return *this;
}

JsonWriter &JsonWriter::begin_array() {
  separator();
  out_ += '[';
  first_.push_back(true);
  return *this;
}

JsonWriter &JsonWriter::end_array() {
  const bool empty = first_.back();
  first_.pop_back();
  if (!empty) {
    indent();
  }
  out_ += ']';
  return *this;
}

JsonWriter &JsonWriter::key(const std::string &k) {
  separator();
  out_ += json(k).dump() + ": ";
  after_key_ = true;
  return *this;
}

JsonWriter &JsonWriter::value(double v) {
  separator();
  out_ += std::isfinite(v) ? format_double(v) : "\"" + format_double(v) + "\"";
  return *this;
}

JsonWriter &JsonWriter::value(std::size_t v) {
  separator();
  out_ += std::to_string(v);
  return *this;
}

JsonWriter &JsonWriter::value(int v) {
  separator();
  out_ += std::to_string(v);
  return *this;
}

JsonWriter &JsonWriter::value(bool v) {
  separator();
  out_ += v ? "true" : "false";
  return *this;
}

JsonWriter &JsonWriter::value(const std::string &v) {
  separator();
  out_ += json(v).dump();
  return *this;
}

JsonWriter &JsonWriter::null() {
  separator();
  out_ += "null";
  return *this;
}

} // namespace llr
