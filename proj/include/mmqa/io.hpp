#pragma once

#include <bit>
#include <cmath>
#include <cstdint>
#include <cstring>
#include <filesystem>
#include <fstream>
#include <iterator>
#include <set>
#include <sstream>
#include <string>
#include <string_view>
#include <type_traits>
#include <vector>

#include "json.hpp"

#include "mmqa/data.hpp"
#include "mmqa/error.hpp"
#include "mmqa/metrics.hpp"
#include "mmqa/model.hpp"
#include "mmqa/optim.hpp"
#include "mmqa/tensor.hpp"
#include "mmqa/text.hpp"
#include "mmqa/train.hpp"

namespace mmqa {

namespace fs = std::filesystem;
using json = nlohmann::ordered_json;

// ---------------------------------------------------------------------------
// Raw file access

inline std::string read_file(const fs::path& path) {
  std::ifstream in(path, std::ios::binary);
  if (!in) throw IoError("cannot open '" + path.string() + "' for reading");
  std::string bytes((std::istreambuf_iterator<char>(in)), std::istreambuf_iterator<char>());
  if (in.bad()) throw IoError("read failed for '" + path.string() + "'");
  return bytes;
}

/// Writes to a sibling temporary file, then renames over `path`.
inline void write_file_atomic(const fs::path& path, std::string_view bytes) {
  fs::path tmp = path;
  tmp += ".tmp";
  {
    std::ofstream out(tmp, std::ios::binary | std::ios::trunc);
    if (!out) throw IoError("cannot open '" + tmp.string() + "' for writing");
    out.write(bytes.data(), static_cast<std::streamsize>(bytes.size()));
    if (!out) throw IoError("write failed for '" + tmp.string() + "'");
  }
  std::error_code ec;
  fs::rename(tmp, path, ec);
  if (ec) throw IoError("cannot move '" + tmp.string() + "' to '" + path.string() + "': " + ec.message());
}

// Little-endian primitive encoding.

class ByteWriter {
 public:
  void u8(std::uint8_t v) { out_.push_back(static_cast<char>(v)); }
  void u32(std::uint32_t v) { raw(v); }
  void u64(std::uint64_t v) { raw(v); }
  void f32(float v) { raw(std::bit_cast<std::uint32_t>(v)); }
  void f64(double v) { raw(std::bit_cast<std::uint64_t>(v)); }
  void bytes(std::string_view s) { out_.append(s); }
  std::string take() { return std::move(out_); }

 private:
  template <typename U>
  void raw(U v) {
    for (std::size_t i = 0; i < sizeof(U); ++i) out_.push_back(static_cast<char>((v >> (8 * i)) & 0xFF));
  }
  std::string out_;
};

class ByteReader {
 public:
  ByteReader(std::string_view data, std::string what) : data_(data), what_(std::move(what)) {}

  std::uint8_t u8() { return static_cast<std::uint8_t>(take(1)[0]); }
  std::uint32_t u32() { return raw<std::uint32_t>(); }
  std::uint64_t u64() { return raw<std::uint64_t>(); }
  float f32() { return std::bit_cast<float>(raw<std::uint32_t>()); }
  double f64() { return std::bit_cast<double>(raw<std::uint64_t>()); }
  std::string_view bytes(std::size_t n) { return take(n); }
  std::size_t remaining() const { return data_.size() - pos_; }
  std::size_t offset() const { return pos_; }

 private:
  std::string_view take(std::size_t n) {
    if (remaining() < n) {
      throw ValidationError(what_ + ": truncated at offset " + std::to_string(pos_) + " (needed " +
                            std::to_string(n) + " more bytes, " + std::to_string(remaining()) +
                            " available)");
    }
    auto s = data_.substr(pos_, n);
    pos_ += n;
    return s;
  }
  template <typename U>
  U raw() {
    auto s = take(sizeof(U));
    U v = 0;
    for (std::size_t i = 0; i < sizeof(U); ++i) v |= static_cast<U>(static_cast<unsigned char>(s[i])) << (8 * i);
    return v;
  }
  std::string_view data_;
  std::size_t pos_ = 0;
  std::string what_;
};

// ---------------------------------------------------------------------------
// Feature files: "MMQA", u8 version, u32 rows, u32 cols, rows·cols f32 LE.

inline constexpr std::string_view feature_magic = "MMQA";
inline constexpr std::uint8_t feature_version = 1;

inline std::string encode_features(const Tensor& m) {
  require_nonempty(m, "encode_features");
  ByteWriter w;
  w.bytes(feature_magic);
  w.u8(feature_version);
  w.u32(static_cast<std::uint32_t>(m.rows()));
  w.u32(static_cast<std::uint32_t>(m.cols()));
  for (double v : m.data()) {
    const auto f = static_cast<float>(v);
    if (!std::isfinite(f)) throw ValidationError("feature matrix holds a non-finite value");
    w.f32(f);
  }
  return w.take();
}

inline Tensor decode_features(std::string_view bytes, const std::string& what = "feature file") {
  ByteReader r(bytes, what);
  if (r.bytes(4) != feature_magic) throw ValidationError(what + ": bad magic (expected MMQA)");
  if (const auto v = r.u8(); v != feature_version) {
    throw ValidationError(what + ": unsupported version " + std::to_string(v));
  }
  const std::uint32_t rows = r.u32();
  const std::uint32_t cols = r.u32();
  if (rows == 0 || cols == 0) throw ValidationError(what + ": empty feature matrix");
  const std::uint64_t expected = std::uint64_t{rows} * cols * 4;
  if (r.remaining() < expected) {
    throw ValidationError(what + ": truncated payload (" + std::to_string(r.remaining()) +
                          " bytes for " + std::to_string(rows) + "x" + std::to_string(cols) + ")");
  }
  if (r.remaining() > expected) throw ValidationError(what + ": trailing bytes after payload");
  Tensor m(rows, cols);
  for (std::size_t i = 0; i < m.size(); ++i) {
    const float f = r.f32();
    if (!std::isfinite(f)) throw ValidationError(what + ": non-finite value at element " + std::to_string(i));
    m[i] = f;
  }
  return m;
}

inline Tensor load_features(const fs::path& path) { return decode_features(read_file(path), path.string()); }

inline void save_features(const fs::path& path, const Tensor& m) { write_file_atomic(path, encode_features(m)); }

// ---------------------------------------------------------------------------
// Dataset files (JSON).
//
//   {"format": "dialogs" | "examples",
//    "dialogs": [{"video_id": str, "summary": str,
//                 "turns": [{"question": str, "answer": str}, ...],
//                 "features": {"flow": path, "rgb": path, "audio": path}}]}
//
// Feature paths are relative to the dataset file. In "examples" files each
// record is one training item whose last turn is the target, and video ids
// may repeat.

enum class DatasetFormat { dialogs, examples };

/// Feature file locations of one dialog, kept alongside the loaded matrices.
struct FeaturePaths {
  fs::path flow, rgb, audio;
  bool empty() const { return flow.empty() && rgb.empty() && audio.empty(); }
};

struct DatasetRecord {
  Dialog dialog;
  FeaturePaths paths;  // absolute
};

struct Dataset {
  DatasetFormat format = DatasetFormat::dialogs;
  std::vector<DatasetRecord> records;

  std::vector<Dialog> dialogs() const {
    std::vector<Dialog> out;
    for (const auto& r : records) out.push_back(r.dialog);
    return out;
  }

  /// Training items: basic expansion for "examples" files, else `mode`.
  std::vector<DialogExample> examples(AugmentMode mode, std::size_t factor, std::uint64_t seed) const {
    return expand_dialogs(dialogs(), format == DatasetFormat::examples ? AugmentMode::basic : mode,
                          factor, seed);
  }
};

inline void check_keys(const json& obj, std::initializer_list<std::string_view> allowed,
                       const std::string& where) {
  if (!obj.is_object()) throw ValidationError(where + ": expected an object");
  for (const auto& [key, value] : obj.items()) {
    bool ok = false;
    for (auto a : allowed) ok = ok || key == a;
    if (!ok) throw ValidationError(where + ": unknown key '" + key + "'");
  }
}

inline std::string require_string(const json& obj, const char* key, const std::string& where) {
  if (!obj.contains(key)) throw ValidationError(where + ": missing field '" + key + "'");
  if (!obj[key].is_string()) throw ValidationError(where + ": field '" + key + "' must be a string");
  return obj[key].get<std::string>();
}

inline json parse_json(std::string_view text, const std::string& what) {
  try {
    return json::parse(text);
  } catch (const json::parse_error& e) {
    throw ValidationError(what + ": parse error at byte " + std::to_string(e.byte) + ": " + e.what());
  }
}

template <typename T>
T get_as(const json& obj, const char* key, T fallback, const std::string& where) {
  if (!obj.contains(key)) return fallback;
  if constexpr (std::is_unsigned_v<T> && !std::is_same_v<T, bool>) {
    if (!obj[key].is_number_unsigned()) {
      throw ValidationError(where + ": key '" + key + "' must be a non-negative integer");
    }
  }
  try {
    return obj[key].get<T>();
  } catch (const json::exception&) {
    throw ValidationError(where + ": key '" + key + "' has the wrong type");
  }
}

inline Dataset parse_dataset(std::string_view text, const fs::path& base_dir, bool load_feature_files = true,
                             const std::string& what = "dataset") {
  const json doc = parse_json(text, what);
  check_keys(doc, {"format", "dialogs"}, what);
  Dataset ds;
  const std::string format = get_as<std::string>(doc, "format", "dialogs", what);
  if (format == "dialogs") {
    ds.format = DatasetFormat::dialogs;
  } else if (format == "examples") {
    ds.format = DatasetFormat::examples;
  } else {
    throw ValidationError(what + ": unknown format '" + format + "'");
  }
  if (!doc.contains("dialogs") || !doc["dialogs"].is_array()) {
    throw ValidationError(what + ": missing 'dialogs' array");
  }
  std::set<std::string> ids;
  std::size_t index = 0;
  for (const auto& d : doc["dialogs"]) {
    const std::string where = what + ": dialog #" + std::to_string(index++);
    check_keys(d, {"video_id", "summary", "turns", "features"}, where);
    DatasetRecord rec;
    rec.dialog.video_id = require_string(d, "video_id", where);
    const std::string named = what + ": dialog '" + rec.dialog.video_id + "'";
    if (ds.format == DatasetFormat::dialogs && !ids.insert(rec.dialog.video_id).second) {
      throw ValidationError(named + ": duplicate video id");
    }
    rec.dialog.summary = tokenize(require_string(d, "summary", named));
    if (rec.dialog.summary.empty()) throw ValidationError(named + ": empty summary");
    if (!d.contains("turns") || !d["turns"].is_array() || d["turns"].empty()) {
      throw ValidationError(named + ": missing or empty 'turns'");
    }
    std::size_t turn_no = 0;
    for (const auto& t : d["turns"]) {
      const std::string tw = named + " turn " + std::to_string(++turn_no);
      check_keys(t, {"question", "answer"}, tw);
      QaPair pair{tokenize(require_string(t, "question", tw)), tokenize(require_string(t, "answer", tw))};
      if (pair.question.empty()) throw ValidationError(tw + ": empty question");
      if (pair.answer.empty()) throw ValidationError(tw + ": empty answer");
      rec.dialog.turns.push_back(std::move(pair));
    }
    if (d.contains("features")) {
      const json& f = d["features"];
      check_keys(f, {"flow", "rgb", "audio"}, named + " features");
      rec.paths.flow = base_dir / require_string(f, "flow", named + " features");
      rec.paths.rgb = base_dir / require_string(f, "rgb", named + " features");
      rec.paths.audio = base_dir / require_string(f, "audio", named + " features");
      if (load_feature_files) {
        rec.dialog.features.flow = load_features(rec.paths.flow);
        rec.dialog.features.rgb = load_features(rec.paths.rgb);
        rec.dialog.features.audio = load_features(rec.paths.audio);
      }
    }
    ds.records.push_back(std::move(rec));
  }
  return ds;
}

inline Dataset load_dataset(const fs::path& path) {
  return parse_dataset(read_file(path), path.parent_path(), true, path.string());
}

inline std::string relative_path(const fs::path& target, const fs::path& base_dir) {
  const fs::path base = base_dir.empty() ? fs::path(".") : base_dir;
  return fs::relative(fs::absolute(target), fs::absolute(base)).generic_string();
}

inline std::string format_dataset(const Dataset& ds, const fs::path& base_dir) {
  json doc;
  doc["format"] = ds.format == DatasetFormat::dialogs ? "dialogs" : "examples";
  doc["dialogs"] = json::array();
  for (const auto& rec : ds.records) {
    json d;
    d["video_id"] = rec.dialog.video_id;
    d["summary"] = join_tokens(rec.dialog.summary);
    d["turns"] = json::array();
    for (const auto& t : rec.dialog.turns) {
      d["turns"].push_back({{"question", join_tokens(t.question)}, {"answer", join_tokens(t.answer)}});
    }
    if (!rec.paths.empty()) {
      d["features"] = {{"flow", relative_path(rec.paths.flow, base_dir)},
                       {"rgb", relative_path(rec.paths.rgb, base_dir)},
                       {"audio", relative_path(rec.paths.audio, base_dir)}};
    }
    doc["dialogs"].push_back(std::move(d));
  }
  return doc.dump(2) + "\n";
}

inline void save_dataset(const fs::path& path, const Dataset& ds) {
  write_file_atomic(path, format_dataset(ds, path.parent_path()));
}

/// Augments every dialog of `ds`; shuffled copies keep the source's feature paths.
inline Dataset augment_dataset(const Dataset& ds, AugmentMode mode, std::size_t factor, std::uint64_t seed) {
  Dataset out;
  out.format = DatasetFormat::examples;
  for (std::size_t i = 0; i < ds.records.size(); ++i) {
    const auto& rec = ds.records[i];
    std::vector<DialogExample> part;
    if (ds.format == DatasetFormat::examples) {
      part = expand_basic(rec.dialog);
    } else {
      part = expand_dialogs({rec.dialog}, mode, factor, mix_seed(seed, i));
    }
    for (const auto& ex : part) out.records.push_back({as_dialog(ex), rec.paths});
  }
  return out;
}

// ---------------------------------------------------------------------------
// Run configuration (JSON, every key optional, unknown keys rejected).

struct RunConfig {
  fs::path train_data;
  fs::path val_data;
  ModelConfig model;
  TrainingConfig training;
};

inline std::string to_string(CellKind k) { return k == CellKind::gru ? "gru" : "lstm"; }
inline std::string to_string(Pooling p) { return p == Pooling::max ? "max" : "average"; }
inline std::string to_string(GruVariant v) { return v == GruVariant::standard ? "standard" : "literal"; }

inline CellKind parse_cell_kind(const std::string& s) {
  if (s == "gru") return CellKind::gru;
  if (s == "lstm") return CellKind::lstm;
  throw ValidationError("unknown cell kind '" + s + "'");
}
inline Pooling parse_pooling(const std::string& s) {
  if (s == "max") return Pooling::max;
  if (s == "average") return Pooling::average;
  throw ValidationError("unknown pooling '" + s + "'");
}
inline GruVariant parse_gru_variant(const std::string& s) {
  if (s == "standard") return GruVariant::standard;
  if (s == "literal") return GruVariant::literal;
  throw ValidationError("unknown GRU variant '" + s + "'");
}

inline json model_config_json(const ModelConfig& m) {
  return {{"embedding_width", m.embedding_width},
          {"hidden", m.hidden},
          {"decoder_hidden", m.decoder_hidden},
          {"cell", to_string(m.cell)},
          {"pooling", to_string(m.pooling)},
          {"gru_variant", to_string(m.gru_variant)},
          {"modalities", m.use_video ? "video+text" : "text-only"},
          {"flow_width", m.flow_width},
          {"rgb_width", m.rgb_width},
          {"audio_width", m.audio_width},
          {"freeze_embeddings", m.freeze_embeddings},
          {"init_seed", m.init_seed}};
}

inline json training_config_json(const TrainingConfig& t) {
  return {{"learning_rate", t.adam.learning_rate},
          {"beta1", t.adam.beta1},
          {"beta2", t.adam.beta2},
          {"epsilon", t.adam.epsilon},
          {"batch_size", t.batch_size},
          {"max_epochs", t.max_epochs},
          {"patience", t.patience},
          {"seed", t.seed},
          {"augment", to_string(t.augment)},
          {"augment_factor", t.augment_factor},
          {"loss", to_string(t.loss)},
          {"sampling_probability", t.sampling_probability},
          {"max_answer_length", t.max_answer_length}};
}

inline ModelConfig parse_model_config(const json& j, const std::string& where) {
  check_keys(j, {"embedding_width", "hidden", "decoder_hidden", "cell", "pooling", "gru_variant", "modalities",
                 "flow_width", "rgb_width", "audio_width", "freeze_embeddings", "init_seed"},
             where);
  ModelConfig m;
  m.embedding_width = get_as<std::size_t>(j, "embedding_width", m.embedding_width, where);
  m.hidden = get_as<std::size_t>(j, "hidden", m.hidden, where);
  m.decoder_hidden = get_as<std::size_t>(j, "decoder_hidden", m.decoder_hidden, where);
  m.cell = parse_cell_kind(get_as<std::string>(j, "cell", to_string(m.cell), where));
  m.pooling = parse_pooling(get_as<std::string>(j, "pooling", to_string(m.pooling), where));
  m.gru_variant = parse_gru_variant(get_as<std::string>(j, "gru_variant", to_string(m.gru_variant), where));
  const auto modalities = get_as<std::string>(j, "modalities", "video+text", where);
  if (modalities != "video+text" && modalities != "text-only") {
    throw ValidationError(where + ": unknown modality set '" + modalities + "'");
  }
  m.use_video = modalities == "video+text";
  m.flow_width = get_as<std::size_t>(j, "flow_width", 0, where);
  m.rgb_width = get_as<std::size_t>(j, "rgb_width", 0, where);
  m.audio_width = get_as<std::size_t>(j, "audio_width", 0, where);
  m.freeze_embeddings = get_as<bool>(j, "freeze_embeddings", m.freeze_embeddings, where);
  m.init_seed = get_as<std::uint64_t>(j, "init_seed", m.init_seed, where);
  return m;
}

inline TrainingConfig parse_training_config(const json& j, const std::string& where) {
  check_keys(j, {"learning_rate", "beta1", "beta2", "epsilon", "batch_size", "max_epochs", "patience", "seed",
                 "augment", "augment_factor", "loss", "sampling_probability", "max_answer_length"},
             where);
  TrainingConfig t;
  t.adam.learning_rate = get_as<double>(j, "learning_rate", t.adam.learning_rate, where);
  t.adam.beta1 = get_as<double>(j, "beta1", t.adam.beta1, where);
  t.adam.beta2 = get_as<double>(j, "beta2", t.adam.beta2, where);
  t.adam.epsilon = get_as<double>(j, "epsilon", t.adam.epsilon, where);
  t.batch_size = get_as<std::size_t>(j, "batch_size", t.batch_size, where);
  t.max_epochs = get_as<std::size_t>(j, "max_epochs", t.max_epochs, where);
  t.patience = get_as<std::size_t>(j, "patience", t.patience, where);
  t.seed = get_as<std::uint64_t>(j, "seed", t.seed, where);
  t.augment = parse_augment_mode(get_as<std::string>(j, "augment", to_string(t.augment), where));
  t.augment_factor = get_as<std::size_t>(j, "augment_factor", t.augment_factor, where);
  t.loss = parse_loss_mode(get_as<std::string>(j, "loss", to_string(t.loss), where));
  t.sampling_probability = get_as<double>(j, "sampling_probability", t.sampling_probability, where);
  t.max_answer_length = get_as<std::size_t>(j, "max_answer_length", t.max_answer_length, where);
  t.validate();
  return t;
}

/// Paths inside the file are relative to `base_dir`.
inline RunConfig parse_run_config(std::string_view text, const fs::path& base_dir,
                                  const std::string& what = "config") {
  const json doc = parse_json(text, what);
  check_keys(doc, {"data", "model", "training"}, what);
  RunConfig cfg;
  if (doc.contains("data")) {
    const json& d = doc["data"];
    check_keys(d, {"train", "val"}, what + ".data");
    if (d.contains("train")) cfg.train_data = base_dir / require_string(d, "train", what + ".data");
    if (d.contains("val")) cfg.val_data = base_dir / require_string(d, "val", what + ".data");
  }
  if (doc.contains("model")) cfg.model = parse_model_config(doc["model"], what + ".model");
  if (doc.contains("training")) cfg.training = parse_training_config(doc["training"], what + ".training");
  return cfg;
}

inline RunConfig load_run_config(const fs::path& path) {
  return parse_run_config(read_file(path), path.parent_path(), path.string());
}

inline std::uint64_t fnv1a64(std::string_view bytes) {
  std::uint64_t h = 0xcbf29ce484222325ULL;
  for (char c : bytes) {
    h ^= static_cast<unsigned char>(c);
    h *= 0x100000001b3ULL;
  }
  return h;
}

/// Canonical text of the resolved model and training settings.
inline std::string canonical_config(const ModelConfig& m, const TrainingConfig& t) {
  return json{{"model", model_config_json(m)}, {"training", training_config_json(t)}}.dump();
}

// ---------------------------------------------------------------------------
// Checkpoints:
//   "MMCK", u8 version, u64 config hash, u32 tensor count, then per tensor
//   u32 name length, name bytes, u8 rank, rank × u32 extents, f64 LE payload.
// Reserved names: "__meta/config" and "__meta/vocab" hold UTF-8 bytes as
// rank-1 tensors; "__adam/m/<param>", "__adam/v/<param>" and "__adam/step"
// hold the optimizer state.

inline constexpr std::string_view checkpoint_magic = "MMCK";
inline constexpr std::uint8_t checkpoint_version = 1;

struct NamedTensor {
  std::string name;
  std::vector<std::uint32_t> extents;
  std::vector<double> data;
  friend bool operator==(const NamedTensor&, const NamedTensor&) = default;
};

struct CheckpointFile {
  std::uint64_t config_hash = 0;
  std::vector<NamedTensor> tensors;

  const NamedTensor* find(std::string_view name) const {
    for (const auto& t : tensors)
      if (t.name == name) return &t;
    return nullptr;
  }
  friend bool operator==(const CheckpointFile&, const CheckpointFile&) = default;
};

inline std::string encode_checkpoint(const CheckpointFile& ck) {
  ByteWriter w;
  w.bytes(checkpoint_magic);
  w.u8(checkpoint_version);
  w.u64(ck.config_hash);
  w.u32(static_cast<std::uint32_t>(ck.tensors.size()));
  for (const auto& t : ck.tensors) {
    std::uint64_t count = 1;
    for (auto e : t.extents) count *= e;
    if (t.extents.empty() || t.extents.size() > 255 || count != t.data.size()) {
      throw ValidationError("checkpoint tensor '" + t.name + "' has inconsistent extents");
    }
    w.u32(static_cast<std::uint32_t>(t.name.size()));
    w.bytes(t.name);
    w.u8(static_cast<std::uint8_t>(t.extents.size()));
    for (auto e : t.extents) w.u32(e);
    for (double v : t.data) w.f64(v);
  }
  return w.take();
}

inline CheckpointFile decode_checkpoint(std::string_view bytes, const std::string& what = "checkpoint") {
  ByteReader r(bytes, what);
  if (r.bytes(4) != checkpoint_magic) throw ValidationError(what + ": bad magic (expected MMCK)");
  if (const auto v = r.u8(); v != checkpoint_version) {
    throw ValidationError(what + ": unsupported version " + std::to_string(v));
  }
  CheckpointFile ck;
  ck.config_hash = r.u64();
  const std::uint32_t count = r.u32();
  std::set<std::string, std::less<>> names;
  for (std::uint32_t i = 0; i < count; ++i) {
    NamedTensor t;
    t.name = std::string(r.bytes(r.u32()));
    if (!names.insert(t.name).second) throw ValidationError(what + ": duplicate tensor '" + t.name + "'");
    const std::uint8_t rank = r.u8();
    if (rank == 0) throw ValidationError(what + ": tensor '" + t.name + "' has rank 0");
    std::uint64_t n = 1;
    for (std::uint8_t k = 0; k < rank; ++k) {
      t.extents.push_back(r.u32());
      n *= t.extents.back();
    }
    if (n * 8 > r.remaining()) throw ValidationError(what + ": truncated payload for '" + t.name + "'");
    t.data.resize(static_cast<std::size_t>(n));
    for (double& v : t.data) v = r.f64();
    ck.tensors.push_back(std::move(t));
  }
  if (r.remaining() != 0) throw ValidationError(what + ": trailing bytes after last tensor");
  return ck;
}

inline NamedTensor bytes_tensor(std::string name, std::string_view text) {
  NamedTensor t{std::move(name), {static_cast<std::uint32_t>(text.size())}, {}};
  for (char c : text) t.data.push_back(static_cast<unsigned char>(c));
  if (t.data.empty()) t = NamedTensor{t.name, {0}, {}};
  return t;
}

inline std::string tensor_bytes(const NamedTensor& t) {
  std::string s;
  for (double v : t.data) {
    if (!(v >= 0 && v <= 255 && v == std::floor(v))) throw ValidationError("tensor '" + t.name + "' is not a byte string");
    s.push_back(static_cast<char>(static_cast<unsigned char>(v)));
  }
  return s;
}

inline NamedTensor matrix_tensor(std::string name, const Tensor& m) {
  NamedTensor t{std::move(name),
                {static_cast<std::uint32_t>(m.rows()), static_cast<std::uint32_t>(m.cols())},
                std::vector<double>(m.data().begin(), m.data().end())};
  return t;
}

inline Tensor tensor_matrix(const NamedTensor& t) {
  if (t.extents.size() != 2) throw ValidationError("tensor '" + t.name + "' is not a matrix");
  return Tensor(t.extents[0], t.extents[1], t.data);
}

inline CheckpointFile make_checkpoint(const Model& m, const AdamState& adam, const TrainingConfig& training) {
  const std::string config = canonical_config(m.config, training);
  CheckpointFile ck;
  ck.config_hash = fnv1a64(config);
  ck.tensors.push_back(bytes_tensor("__meta/config", config));
  ck.tensors.push_back(bytes_tensor("__meta/vocab", format_vocabulary(m.vocab)));
  for (std::size_t p = 0; p < m.params.size(); ++p) {
    ck.tensors.push_back(matrix_tensor(m.params.name(p), m.params.value(p)));
  }
  if (!adam.m.empty()) {
    for (std::size_t p = 0; p < m.params.size(); ++p) {
      ck.tensors.push_back(matrix_tensor("__adam/m/" + m.params.name(p), adam.m.at(p)));
      ck.tensors.push_back(matrix_tensor("__adam/v/" + m.params.name(p), adam.v.at(p)));
    }
  }
  ck.tensors.push_back(NamedTensor{"__adam/step", {1}, {static_cast<double>(adam.step)}});
  return ck;
}

struct RestoredCheckpoint {
  Model model;
  AdamState adam;
  TrainingConfig training;
};

inline RestoredCheckpoint restore_checkpoint(const CheckpointFile& ck) {
  const NamedTensor* cfg = ck.find("__meta/config");
  const NamedTensor* voc = ck.find("__meta/vocab");
  if (!cfg || !voc) throw ValidationError("checkpoint lacks its config or vocabulary record");
  const std::string config_text = tensor_bytes(*cfg);
  if (fnv1a64(config_text) != ck.config_hash) throw ValidationError("checkpoint config hash mismatch");
  const json doc = parse_json(config_text, "checkpoint config");
  ModelConfig mc = parse_model_config(doc.at("model"), "checkpoint config.model");
  TrainingConfig tc = parse_training_config(doc.at("training"), "checkpoint config.training");
  Model model = make_model(mc, parse_vocabulary(tensor_bytes(*voc)));
  AdamState adam = AdamState::zeros_like(model.params);
  bool has_moments = false;
  for (std::size_t p = 0; p < model.params.size(); ++p) {
    const std::string& name = model.params.name(p);
    const NamedTensor* t = ck.find(name);
    if (!t) throw ValidationError("checkpoint lacks parameter '" + name + "'");
    Tensor value = tensor_matrix(*t);
    if (!value.same_shape(model.params.value(p))) {
      throw ValidationError("checkpoint parameter '" + name + "' has shape " + value.shape_string() +
                            ", model expects " + model.params.value(p).shape_string());
    }
    model.params.value(p) = std::move(value);
    const NamedTensor* m = ck.find("__adam/m/" + name);
    const NamedTensor* v = ck.find("__adam/v/" + name);
    if (m && v) {
      adam.m[p] = tensor_matrix(*m);
      adam.v[p] = tensor_matrix(*v);
      has_moments = true;
    }
  }
  if (const NamedTensor* step = ck.find("__adam/step"); step && !step->data.empty()) {
    adam.step = static_cast<std::uint64_t>(step->data[0]);
  }
  if (!has_moments) {
    adam.m.clear();
    adam.v.clear();
  }
  return {std::move(model), std::move(adam), tc};
}

inline void save_checkpoint(const fs::path& path, const CheckpointFile& ck) {
  write_file_atomic(path, encode_checkpoint(ck));
}

inline CheckpointFile load_checkpoint(const fs::path& path) {
  return decode_checkpoint(read_file(path), path.string());
}

// ---------------------------------------------------------------------------
// Plain-text outputs.

inline std::string format_double(double v) {
  std::ostringstream os;
  os.imbue(std::locale::classic());
  os.precision(17);
  os << v;
  return os.str();
}

/// One "name value" line per metric.
inline std::string format_scores(const ScoreTable& table) {
  std::string out;
  for (const auto& [name, value] : table) out += name + " " + format_double(value) + "\n";
  return out;
}

inline ScoreTable parse_scores(std::string_view text) {
  ScoreTable table;
  std::istringstream in{std::string(text)};
  in.imbue(std::locale::classic());
  std::string name;
  double value = 0;
  while (in >> name >> value) table.emplace_back(name, value);
  return table;
}

/// One answer per line, tokens separated by single spaces.
inline std::string format_generations(const std::vector<Tokens>& gens) {
  std::string out;
  for (const auto& g : gens) out += join_tokens(g) + "\n";
  return out;
}

inline std::vector<Tokens> parse_generations(std::string_view text) {
  std::vector<Tokens> out;
  std::size_t start = 0;
  while (start < text.size()) {
    std::size_t end = text.find('\n', start);
    if (end == std::string_view::npos) end = text.size();
    Tokens line;
    std::istringstream in{std::string(text.substr(start, end - start))};
    std::string tok;
    while (in >> tok) line.push_back(tok);
    out.push_back(std::move(line));
    start = end + 1;
  }
  return out;
}

}  // namespace mmqa
