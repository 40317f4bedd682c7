#include "pscbm/data_model.h"

#include <algorithm>
#include <bit>
#include <cctype>
#include <cmath>
#include <cstring>
#include <fstream>
#include <iterator>
#include <map>
#include <sstream>
#include <thread>
#include <unordered_map>

#include "json.hpp"
#include "pscbm/error.h"

namespace pscbm {

using json = nlohmann::json;

// ---------------------------------------------------------------- Matrix

Matrix::Matrix(std::size_t rows, std::size_t cols, std::vector<double> data)
    : rows_(rows), cols_(cols), data_(std::move(data)) {
  if (data_.size() != rows * cols) {
    throw invalid_argument("matrix data length " + std::to_string(data_.size()) +
                           " does not match " + std::to_string(rows) + "x" +
                           std::to_string(cols));
  }
}

Matrix Matrix::select_rows(std::span<const std::size_t> idx) const {
  Matrix out(idx.size(), cols_);
  for (std::size_t r = 0; r < idx.size(); ++r) {
    if (idx[r] >= rows_) throw invalid_argument("row index out of range");
    std::copy_n(row(idx[r]).begin(), cols_, out.row(r).begin());
  }
  return out;
}

Matrix Matrix::select_cols(std::span<const std::size_t> idx) const {
  Matrix out(rows_, idx.size());
  for (std::size_t c = 0; c < idx.size(); ++c) {
    if (idx[c] >= cols_) throw invalid_argument("column index out of range");
  }
  for (std::size_t r = 0; r < rows_; ++r) {
    for (std::size_t c = 0; c < idx.size(); ++c) out(r, c) = (*this)(r, idx[c]);
  }
  return out;
}

std::size_t BinaryMatrix::count_ones() const {
  return static_cast<std::size_t>(std::count(data_.begin(), data_.end(), 1));
}

double dot(std::span<const double> a, std::span<const double> b) {
  double s = 0.0;
  for (std::size_t k = 0; k < a.size(); ++k) s += a[k] * b[k];
  return s;
}

void for_each_tile(std::size_t n, std::size_t tile, unsigned threads,
                   void (*fn)(std::size_t, std::size_t, void*), void* ctx) {
  if (tile == 0) tile = 1;
  const std::size_t num_tiles = (n + tile - 1) / tile;
  if (threads <= 1 || num_tiles <= 1) {
    for (std::size_t t = 0; t < num_tiles; ++t) {
      fn(t * tile, std::min(n, (t + 1) * tile), ctx);
    }
    return;
  }
  const unsigned workers =
      static_cast<unsigned>(std::min<std::size_t>(threads, num_tiles));
  std::vector<std::jthread> pool;
  pool.reserve(workers);
  for (unsigned w = 0; w < workers; ++w) {
    pool.emplace_back([=] {
      for (std::size_t t = w; t < num_tiles; t += workers) {
        fn(t * tile, std::min(n, (t + 1) * tile), ctx);
      }
    });
  }
}

// ------------------------------------------------------ EmbeddingMatrix

EmbeddingMatrix::EmbeddingMatrix(Matrix values) : values_(std::move(values)) {
  if (values_.rows() == 0 || values_.cols() == 0) {
    throw invalid_argument("embedding matrix must have at least one row and column");
  }
  for (std::size_t r = 0; r < values_.rows(); ++r) {
    for (std::size_t c = 0; c < values_.cols(); ++c) {
      if (!std::isfinite(values_(r, c))) {
        throw Error(ErrorCode::kNumeric,
                    "non-finite embedding value at row " + std::to_string(r) +
                        ", col " + std::to_string(c));
      }
    }
  }
}

EmbeddingMatrix EmbeddingMatrix::select_rows(std::span<const std::size_t> idx) const {
  EmbeddingMatrix out(values_.select_rows(idx));
  out.normalized_ = normalized_;
  return out;
}

EmbeddingMatrix normalize_rows(const EmbeddingMatrix& m) {
  Matrix out = m.values();
  for (std::size_t r = 0; r < out.rows(); ++r) {
    auto row = out.row(r);
    const double norm = std::sqrt(dot(row, row));
    if (norm == 0.0) {
      throw invalid_argument("cannot normalize all-zero row " + std::to_string(r));
    }
    for (double& v : row) v /= norm;
  }
  EmbeddingMatrix result(std::move(out));
  result.normalized_ = true;
  return result;
}

// ------------------------------------------------------------------ EMB1

namespace {

constexpr char kMagic[4] = {'P', 'S', 'C', 'B'};
constexpr std::uint32_t kVersion = 1;
constexpr std::size_t kHeaderBytes = 16;

std::uint32_t read_u32_le(const std::uint8_t* p) {
  return static_cast<std::uint32_t>(p[0]) |
         (static_cast<std::uint32_t>(p[1]) << 8) |
         (static_cast<std::uint32_t>(p[2]) << 16) |
         (static_cast<std::uint32_t>(p[3]) << 24);
}

void write_u32_le(std::vector<std::uint8_t>& out, std::uint32_t v) {
  for (int k = 0; k < 4; ++k) out.push_back(static_cast<std::uint8_t>(v >> (8 * k)));
}

}  // namespace

EmbeddingMatrix parse_embeddings(std::span<const std::uint8_t> bytes) {
  if (bytes.size() < 4) {
    throw LoadError(LoadErrorKind::kTruncated, bytes.size(),
                    "EMB1: file too short for magic at byte " +
                        std::to_string(bytes.size()));
  }
  if (std::memcmp(bytes.data(), kMagic, 4) != 0) {
    throw LoadError(LoadErrorKind::kBadMagic, 0, "EMB1: bad magic at byte 0");
  }
  if (bytes.size() < kHeaderBytes) {
    throw LoadError(LoadErrorKind::kTruncated, bytes.size(),
                    "EMB1: header truncated at byte " + std::to_string(bytes.size()));
  }
  const std::uint32_t version = read_u32_le(bytes.data() + 4);
  if (version != kVersion) {
    throw LoadError(LoadErrorKind::kBadVersion, 4,
                    "EMB1: unsupported version " + std::to_string(version) +
                        " at byte 4");
  }
  const std::uint32_t rows = read_u32_le(bytes.data() + 8);
  const std::uint32_t cols = read_u32_le(bytes.data() + 12);
  if (rows == 0) {
    throw LoadError(LoadErrorKind::kZeroDimension, 8, "EMB1: rows = 0 at byte 8");
  }
  if (cols == 0) {
    throw LoadError(LoadErrorKind::kZeroDimension, 12, "EMB1: cols = 0 at byte 12");
  }
  const std::uint64_t count = static_cast<std::uint64_t>(rows) * cols;
  const std::uint64_t expected = kHeaderBytes + 4 * count;
  if (bytes.size() < expected) {
    throw LoadError(LoadErrorKind::kTruncated, bytes.size(),
                    "EMB1: payload truncated at byte " + std::to_string(bytes.size()) +
                        ", expected " + std::to_string(expected) + " bytes");
  }
  if (bytes.size() > expected) {
    throw LoadError(LoadErrorKind::kTrailingBytes, expected,
                    "EMB1: unexpected trailing data at byte " + std::to_string(expected));
  }
  std::vector<double> data(count);
  for (std::uint64_t k = 0; k < count; ++k) {
    const std::uint64_t offset = kHeaderBytes + 4 * k;
    const float v = std::bit_cast<float>(read_u32_le(bytes.data() + offset));
    if (!std::isfinite(v)) {
      throw LoadError(LoadErrorKind::kNonFinite, offset,
                      "EMB1: non-finite value at row " + std::to_string(k / cols) +
                          ", col " + std::to_string(k % cols) + " (byte " +
                          std::to_string(offset) + ")");
    }
    data[k] = static_cast<double>(v);
  }
  return EmbeddingMatrix(Matrix(rows, cols, std::move(data)));
}

std::vector<std::uint8_t> serialize_embeddings(const EmbeddingMatrix& m) {
  std::vector<std::uint8_t> out;
  out.reserve(kHeaderBytes + 4 * m.rows() * m.cols());
  out.insert(out.end(), std::begin(kMagic), std::end(kMagic));
  write_u32_le(out, kVersion);
  write_u32_le(out, static_cast<std::uint32_t>(m.rows()));
  write_u32_le(out, static_cast<std::uint32_t>(m.cols()));
  for (double v : m.values().data()) {
    write_u32_le(out, std::bit_cast<std::uint32_t>(static_cast<float>(v)));
  }
  return out;
}

EmbeddingMatrix load_embeddings(const std::filesystem::path& path) {
  const auto bytes = read_file_bytes(path);
  try {
    return parse_embeddings(bytes);
  } catch (const LoadError& e) {
    throw LoadError(e.kind(), e.offset(), path.string() + ": " + e.what());
  }
}

void save_embeddings(const EmbeddingMatrix& m, const std::filesystem::path& path) {
  const auto bytes = serialize_embeddings(m);
  std::ofstream out(path, std::ios::binary);
  if (!out) throw Error(ErrorCode::kIo, "cannot write " + path.string());
  out.write(reinterpret_cast<const char*>(bytes.data()),
            static_cast<std::streamsize>(bytes.size()));
}

// ----------------------------------------------------------- ConceptBank

std::string concept_key(std::string_view text) {
  auto is_space = [](unsigned char c) { return std::isspace(c) != 0; };
  while (!text.empty() && is_space(text.front())) text.remove_prefix(1);
  while (!text.empty() && is_space(text.back())) text.remove_suffix(1);
  std::string key(text);
  for (char& c : key) c = static_cast<char>(std::tolower(static_cast<unsigned char>(c)));
  return key;
}

ConceptBank::ConceptBank(std::size_t num_classes, std::vector<ConceptEntry> concepts)
    : num_classes_(num_classes), concepts_(std::move(concepts)) {
  std::unordered_map<std::string, std::size_t> seen;
  for (std::size_t j = 0; j < concepts_.size(); ++j) {
    ConceptEntry& c = concepts_[j];
    const std::string key = concept_key(c.text);
    if (key.empty()) {
      throw Error(ErrorCode::kFormat, "concept " + std::to_string(j) + " has empty text");
    }
    if (auto [it, inserted] = seen.emplace(key, j); !inserted) {
      throw Error(ErrorCode::kFormat, "duplicate concept text '" + c.text +
                                          "' at positions " + std::to_string(it->second) +
                                          " and " + std::to_string(j));
    }
    std::sort(c.classes.begin(), c.classes.end());
    c.classes.erase(std::unique(c.classes.begin(), c.classes.end()), c.classes.end());
    if (!c.classes.empty() && c.classes.back() >= num_classes_) {
      throw Error(ErrorCode::kFormat,
                  "concept '" + c.text + "' references class " +
                      std::to_string(c.classes.back()) + " but num_classes is " +
                      std::to_string(num_classes_));
    }
  }
}

bool ConceptBank::has_aliases() const {
  return std::any_of(concepts_.begin(), concepts_.end(),
                     [](const ConceptEntry& c) { return !c.aliases.empty(); });
}

std::vector<std::size_t> ConceptBank::embedding_rows() const {
  std::vector<std::size_t> rows;
  rows.reserve(concepts_.size());
  for (const auto& c : concepts_) rows.push_back(c.embedding_row);
  return rows;
}

namespace {

template <typename T>
T required(const json& obj, const char* key, std::string_view where) {
  if (!obj.is_object() || !obj.contains(key)) {
    throw Error(ErrorCode::kFormat,
                std::string(where) + ": missing required key '" + key + "'");
  }
  try {
    return obj.at(key).get<T>();
  } catch (const json::exception& e) {
    throw Error(ErrorCode::kFormat,
                std::string(where) + ": bad value for '" + key + "': " + e.what());
  }
}

}  // namespace

ConceptBank parse_concepts(std::string_view json_text) {
  json doc;
  try {
    doc = json::parse(json_text);
  } catch (const json::parse_error& e) {
    throw Error(ErrorCode::kFormat, std::string("concept JSON: ") + e.what());
  }
  const auto num_classes = required<std::size_t>(doc, "num_classes", "concept JSON");
  if (!doc.contains("concepts") || !doc["concepts"].is_array()) {
    throw Error(ErrorCode::kFormat, "concept JSON: 'concepts' must be an array");
  }

  std::vector<ConceptEntry> entries;
  std::unordered_map<std::string, std::size_t> index_of;
  std::size_t position = 0;
  for (const json& record : doc["concepts"]) {
    const std::string where = "concept record " + std::to_string(position);
    auto text = required<std::string>(record, "text", where);
    auto classes = required<std::vector<std::int64_t>>(record, "classes", where);
    std::vector<ClassIndex> class_set;
    for (std::int64_t y : classes) {
      if (y < 0 || static_cast<std::uint64_t>(y) >= num_classes) {
        throw Error(ErrorCode::kFormat, where + ": class index " + std::to_string(y) +
                                            " out of range (num_classes = " +
                                            std::to_string(num_classes) + ")");
      }
      class_set.push_back(static_cast<ClassIndex>(y));
    }
    const std::string key = concept_key(text);
    if (key.empty()) throw Error(ErrorCode::kFormat, where + ": empty concept text");

    std::size_t row = position;
    if (record.contains("embedding_row")) {
      row = required<std::size_t>(record, "embedding_row", where);
    }
    std::vector<std::string> aliases;
    if (record.contains("aliases")) {
      aliases = required<std::vector<std::string>>(record, "aliases", where);
    }

    if (auto it = index_of.find(key); it != index_of.end()) {
      ConceptEntry& existing = entries[it->second];
      existing.classes.insert(existing.classes.end(), class_set.begin(), class_set.end());
      for (auto& a : aliases) {
        if (std::find(existing.aliases.begin(), existing.aliases.end(), a) ==
            existing.aliases.end()) {
          existing.aliases.push_back(std::move(a));
        }
      }
    } else {
      index_of.emplace(key, entries.size());
      // Stored text is trimmed; case is preserved from the first occurrence.
      const auto first = text.find_first_not_of(" \t\r\n\f\v");
      const auto last = text.find_last_not_of(" \t\r\n\f\v");
      entries.push_back(ConceptEntry{text.substr(first, last - first + 1),
                                     std::move(class_set), row, std::move(aliases)});
    }
    ++position;
  }
  return ConceptBank(num_classes, std::move(entries));
}

ConceptBank load_concepts(const std::filesystem::path& path) {
  const std::string text = read_file_text(path);
  try {
    return parse_concepts(text);
  } catch (const Error& e) {
    throw Error(e.code(), path.string() + ": " + e.what());
  }
}

std::string serialize_concepts(const ConceptBank& bank) {
  json concepts = json::array();
  for (const auto& c : bank.concepts()) {
    json record = {{"text", c.text},
                   {"classes", c.classes},
                   {"embedding_row", c.embedding_row}};
    if (!c.aliases.empty()) record["aliases"] = c.aliases;
    concepts.push_back(std::move(record));
  }
  json doc = {{"num_classes", bank.num_classes()}, {"concepts", std::move(concepts)}};
  return doc.dump(2) + "\n";
}

void save_concepts(const ConceptBank& bank, const std::filesystem::path& path) {
  write_file_text(path, serialize_concepts(bank));
}

EmbeddingMatrix concept_embeddings(const ConceptBank& bank, const EmbeddingMatrix& texts) {
  const auto rows = bank.embedding_rows();
  for (std::size_t j = 0; j < rows.size(); ++j) {
    if (rows[j] >= texts.rows()) {
      throw Error(ErrorCode::kFormat,
                  "concept '" + bank[j].text + "' has embedding_row " +
                      std::to_string(rows[j]) + " but the text embedding file has " +
                      std::to_string(texts.rows()) + " rows");
    }
  }
  return texts.select_rows(rows);
}

// ----------------------------------------------------------- LabelVector

LabelVector::LabelVector(std::vector<ClassIndex> labels, std::size_t num_classes)
    : labels_(std::move(labels)), num_classes_(num_classes) {
  if (num_classes_ < 2) throw invalid_argument("need at least 2 classes");
  for (std::size_t i = 0; i < labels_.size(); ++i) {
    if (labels_[i] >= num_classes_) {
      throw Error(ErrorCode::kFormat, "label " + std::to_string(labels_[i]) + " at row " +
                                          std::to_string(i) + " is out of range");
    }
  }
}

LabelVector LabelVector::select(std::span<const std::size_t> idx) const {
  std::vector<ClassIndex> out;
  out.reserve(idx.size());
  for (std::size_t i : idx) out.push_back(labels_.at(i));
  return LabelVector(std::move(out), num_classes_);
}

std::vector<std::vector<std::size_t>> LabelVector::members_by_class() const {
  std::vector<std::vector<std::size_t>> members(num_classes_);
  for (std::size_t i = 0; i < labels_.size(); ++i) members[labels_[i]].push_back(i);
  return members;
}

LabelVector load_labels(const std::filesystem::path& path, std::size_t num_classes) {
  std::istringstream in(read_file_text(path));
  std::vector<ClassIndex> labels;
  std::string line;
  std::size_t line_no = 0;
  while (std::getline(in, line)) {
    ++line_no;
    if (!line.empty() && line.back() == '\r') line.pop_back();
    if (line.empty()) continue;
    std::size_t used = 0;
    unsigned long value = 0;
    try {
      value = std::stoul(line, &used);
    } catch (const std::exception&) {
      used = 0;
    }
    if (used != line.size() || line.front() == '-' || line.front() == '+') {
      throw Error(ErrorCode::kFormat, path.string() + ":" + std::to_string(line_no) +
                                          ": expected a class index, got '" + line + "'");
    }
    labels.push_back(static_cast<ClassIndex>(value));
  }
  return LabelVector(std::move(labels), num_classes);
}

void save_labels(const LabelVector& labels, const std::filesystem::path& path) {
  std::string out;
  for (ClassIndex y : labels.labels()) {
    out += std::to_string(y);
    out += '\n';
  }
  write_file_text(path, out);
}

// -------------------------------------------------------- LabeledDataset

LabeledDataset::LabeledDataset(EmbeddingMatrix images, BinaryMatrix concept_labels,
                               LabelVector class_labels)
    : image_embeddings(std::move(images)),
      concept_labels(std::move(concept_labels)),
      class_labels(std::move(class_labels)) {
  const std::size_t n = image_embeddings.rows();
  if (this->concept_labels.rows() != n || this->class_labels.size() != n) {
    throw invalid_argument("labeled dataset: images, concept labels and class labels "
                           "disagree on the number of rows");
  }
}

BinaryMatrix load_concept_labels(const std::filesystem::path& path) {
  std::istringstream in(read_file_text(path));
  std::vector<std::vector<bool>> rows;
  std::string line;
  while (std::getline(in, line)) {
    if (line.empty()) continue;
    std::vector<bool> row;
    for (std::size_t k = 0; k < line.size(); k += 2) {
      if ((line[k] != '0' && line[k] != '1') ||
          (k + 1 < line.size() && line[k + 1] != ',')) {
        throw Error(ErrorCode::kFormat, path.string() + ": malformed concept label row " +
                                            std::to_string(rows.size()));
      }
      row.push_back(line[k] == '1');
    }
    if (!rows.empty() && row.size() != rows.front().size()) {
      throw Error(ErrorCode::kFormat, path.string() + ": ragged concept label rows");
    }
    rows.push_back(std::move(row));
  }
  BinaryMatrix s(rows.size(), rows.empty() ? 0 : rows.front().size());
  for (std::size_t i = 0; i < rows.size(); ++i) {
    for (std::size_t j = 0; j < rows[i].size(); ++j) s.set(i, j, rows[i][j]);
  }
  return s;
}

void save_concept_labels(const BinaryMatrix& s, const std::filesystem::path& path) {
  std::string out;
  out.reserve(s.rows() * (2 * s.cols() + 1));
  for (std::size_t i = 0; i < s.rows(); ++i) {
    for (std::size_t j = 0; j < s.cols(); ++j) {
      if (j) out += ',';
      out += s(i, j) ? '1' : '0';
    }
    out += '\n';
  }
  write_file_text(path, out);
}

// -------------------------------------------------------------- Config

std::string_view to_string(StrategyMode mode) {
  switch (mode) {
    case StrategyMode::kIndependent:
      return "independent";
    case StrategyMode::kPartiallyShared:
      return "partially_shared";
    case StrategyMode::kGloballyShared:
      return "globally_shared";
  }
  return "unknown";
}

StrategyMode parse_strategy(std::string_view name) {
  if (name == "independent") return StrategyMode::kIndependent;
  if (name == "partially_shared") return StrategyMode::kPartiallyShared;
  if (name == "globally_shared") return StrategyMode::kGloballyShared;
  throw invalid_argument("unknown strategy '" + std::string(name) +
                         "' (expected independent, partially_shared or globally_shared)");
}

void PipelineConfig::validate() const {
  auto check = [](bool ok, const std::string& msg) {
    if (!ok) throw invalid_argument(msg);
  };
  auto finite = [](double v) { return std::isfinite(v); };
  check(finite(tau_conf) && tau_conf > 0.0 && tau_conf < 1.0,
        "tau_conf must be in (0, 1), got " + std::to_string(tau_conf));
  check(finite(tau_merge) && tau_merge > 0.0 && tau_merge <= 1.0,
        "tau_merge must be in (0, 1], got " + std::to_string(tau_merge));
  check(finite(beta) && beta >= 0.0, "beta must be >= 0, got " + std::to_string(beta));
  check(cbl.batch_size >= 1, "cbl.batch_size must be >= 1");
  check(finite(cbl.learning_rate) && cbl.learning_rate > 0.0,
        "cbl.learning_rate must be > 0");
  check(finite(cbl.weight_decay) && cbl.weight_decay >= 0.0,
        "cbl.weight_decay must be >= 0");
  check(finite(cbl.beta1) && cbl.beta1 >= 0.0 && cbl.beta1 < 1.0,
        "cbl.beta1 must be in [0, 1)");
  check(finite(cbl.beta2) && cbl.beta2 >= 0.0 && cbl.beta2 < 1.0,
        "cbl.beta2 must be in [0, 1)");
  check(finite(cbl.epsilon) && cbl.epsilon > 0.0, "cbl.epsilon must be > 0");
  check(fcl.batch_size >= 1, "fcl.batch_size must be >= 1");
  check(finite(fcl.lambda) && fcl.lambda >= 0.0,
        "fcl.lambda must be >= 0, got " + std::to_string(fcl.lambda));
  check(finite(fcl.alpha) && fcl.alpha >= 0.0 && fcl.alpha <= 1.0,
        "fcl.alpha must be in [0, 1], got " + std::to_string(fcl.alpha));
  check(finite(fcl.step_size) && fcl.step_size >= 0.0, "fcl.step_size must be >= 0");
  check(finite(fcl.tolerance) && fcl.tolerance >= 0.0, "fcl.tolerance must be >= 0");
}

// ------------------------------------------------------------- File I/O

std::vector<std::uint8_t> read_file_bytes(const std::filesystem::path& path) {
  std::ifstream in(path, std::ios::binary);
  if (!in) throw Error(ErrorCode::kIo, "cannot open " + path.string());
  return std::vector<std::uint8_t>(std::istreambuf_iterator<char>(in), {});
}

std::string read_file_text(const std::filesystem::path& path) {
  std::ifstream in(path, std::ios::binary);
  if (!in) throw Error(ErrorCode::kIo, "cannot open " + path.string());
  return std::string(std::istreambuf_iterator<char>(in), {});
}

void write_file_text(const std::filesystem::path& path, std::string_view text) {
  std::ofstream out(path, std::ios::binary);
  if (!out) throw Error(ErrorCode::kIo, "cannot write " + path.string());
  out.write(text.data(), static_cast<std::streamsize>(text.size()));
  if (!out) throw Error(ErrorCode::kIo, "write failed for " + path.string());
}

}  // namespace pscbm
