#include "panelreg/compress.hpp"

#include <algorithm>
#include <atomic>
#include <charconv>
#include <fstream>
#include <istream>
#include <numeric>
#include <ostream>
#include <queue>
#include <sstream>
#include <string>

#include "panelreg/error.hpp"

namespace panelreg {

namespace {

constexpr std::size_t kInitialCapacity = 64;

std::atomic<std::uint64_t> g_run_counter{0};

// On-disk run record: key doubles, then n, y.sum, y.comp, yy.sum, yy.comp.
struct RunRecord {
  std::vector<double> key;
  std::int64_t n = 0;
  CompensatedSum y;
  CompensatedSum yy;
};

class RunReader {
 public:
  RunReader(const std::filesystem::path& path, std::size_t width) : in_(path, std::ios::binary), width_(width) {
    if (!in_) throw Error("cannot reopen spill run " + path.string());
    current_.key.resize(width);
  }

  bool next() {
    const auto key_bytes = static_cast<std::streamsize>(width_ * sizeof(double));
    if (!in_.read(reinterpret_cast<char*>(current_.key.data()), key_bytes)) return false;
    double tail[4];
    in_.read(reinterpret_cast<char*>(&current_.n), sizeof(current_.n));
    in_.read(reinterpret_cast<char*>(tail), sizeof(tail));
    if (!in_) throw Error("truncated spill run");
    current_.y = {tail[0], tail[1]};
    current_.yy = {tail[2], tail[3]};
    return true;
  }

  const RunRecord& current() const { return current_; }

 private:
  std::ifstream in_;
  std::size_t width_;
  RunRecord current_;
};

std::string format_double(double v) {
  char buf[64];
  auto [p, ec] = std::to_chars(buf, buf + sizeof(buf), v);
  return std::string(buf, p);
}

}  // namespace

Compressor::Compressor(ColumnSchema schema, CompressorOptions options)
    : schema_(std::move(schema)), options_(std::move(options)), width_(schema_.size()) {
  if (width_ == 0) throw ConfigError("design schema has no columns");
  table_.assign(kInitialCapacity, 0);
}

Compressor::~Compressor() {
  for (const auto& run : runs_) {
    std::error_code ec;
    std::filesystem::remove(run, ec);
  }
}

Compressor::Compressor(Compressor&& other) noexcept
    : schema_(std::move(other.schema_)),
      options_(std::move(other.options_)),
      width_(other.width_),
      keys_(std::move(other.keys_)),
      accs_(std::move(other.accs_)),
      hashes_(std::move(other.hashes_)),
      table_(std::move(other.table_)),
      slots_(other.slots_),
      total_rows_(other.total_rows_),
      generation_(other.generation_),
      runs_(std::move(other.runs_)) {
  other.runs_.clear();
  other.slots_ = 0;
}

Compressor& Compressor::operator=(Compressor&& other) noexcept {
  if (this != &other) {
    this->~Compressor();
    new (this) Compressor(std::move(other));
  }
  return *this;
}

std::size_t Compressor::bytes_per_stratum() const {
  // key + accumulator + hash + two table entries at load factor 1/2
  return width_ * sizeof(double) + sizeof(Acc) + sizeof(std::uint64_t) + 2 * sizeof(std::uint32_t);
}

std::size_t Compressor::locate(std::span<const double> key) {
  if (key.size() != width_) throw std::logic_error("design key width does not match the schema");
  const std::uint64_t h = hash_key(key);
  std::size_t mask = table_.size() - 1;
  std::size_t i = static_cast<std::size_t>(h) & mask;
  while (table_[i] != 0) {
    const std::size_t slot = table_[i] - 1;
    if (hashes_[slot] == h && keys_equal(key_at(slot), key)) return slot;
    i = (i + 1) & mask;
  }
  if (options_.memory_budget_bytes > 0 && slots_ > 0 &&
      (slots_ + 1) * bytes_per_stratum() > options_.memory_budget_bytes) {
    spill();
    mask = table_.size() - 1;
    i = static_cast<std::size_t>(h) & mask;
  }
  if (2 * (slots_ + 1) > table_.size()) {
    grow();
    mask = table_.size() - 1;
    i = static_cast<std::size_t>(h) & mask;
    while (table_[i] != 0) i = (i + 1) & mask;
  }
  const std::size_t slot = slots_++;
  keys_.insert(keys_.end(), key.begin(), key.end());
  accs_.emplace_back();
  hashes_.push_back(h);
  table_[i] = static_cast<std::uint32_t>(slot + 1);
  return slot;
}

void Compressor::add_at(std::size_t slot, double y) {
  Acc& a = accs_[slot];
  ++a.n;
  a.y.add(y);
  a.yy.add(y * y);
  ++total_rows_;
}

void Compressor::add_stats_at(std::size_t slot, std::int64_t n, double sum_y, double sum_y_sq) {
  Acc& a = accs_[slot];
  a.n += n;
  a.y.add(sum_y);
  a.yy.add(sum_y_sq);
  total_rows_ += static_cast<std::uint64_t>(n);
}

void Compressor::grow() {
  std::vector<std::uint32_t> bigger(table_.size() * 2, 0);
  const std::size_t mask = bigger.size() - 1;
  for (std::size_t slot = 0; slot < slots_; ++slot) {
    std::size_t i = static_cast<std::size_t>(hashes_[slot]) & mask;
    while (bigger[i] != 0) i = (i + 1) & mask;
    bigger[i] = static_cast<std::uint32_t>(slot + 1);
  }
  table_ = std::move(bigger);
}

void Compressor::clear_table() {
  keys_.clear();
  accs_.clear();
  hashes_.clear();
  table_.assign(kInitialCapacity, 0);
  slots_ = 0;
}

std::vector<std::size_t> Compressor::sorted_slots() const {
  std::vector<std::size_t> order(slots_);
  std::iota(order.begin(), order.end(), 0);
  std::sort(order.begin(), order.end(), [&](std::size_t a, std::size_t b) { return key_less(key_at(a), key_at(b)); });
  return order;
}

void Compressor::spill() {
  const auto dir = options_.spill_dir.empty() ? std::filesystem::temp_directory_path() : options_.spill_dir;
  const auto path = dir / ("panelreg-run-" + std::to_string(reinterpret_cast<std::uintptr_t>(this)) + "-" +
                           std::to_string(g_run_counter++) + ".bin");
  std::ofstream out(path, std::ios::binary);
  if (!out) throw Error("cannot create spill run " + path.string());
  runs_.push_back(path);
  for (const std::size_t slot : sorted_slots()) {
    const Acc& a = accs_[slot];
    const double tail[4] = {a.y.sum, a.y.comp, a.yy.sum, a.yy.comp};
    out.write(reinterpret_cast<const char*>(key_at(slot).data()), static_cast<std::streamsize>(width_ * sizeof(double)));
    out.write(reinterpret_cast<const char*>(&a.n), sizeof(a.n));
    out.write(reinterpret_cast<const char*>(tail), sizeof(tail));
  }
  if (!out) throw Error("failed writing spill run " + path.string());
  clear_table();
  ++generation_;
}

void Compressor::merge(Compressor&& other) {
  if (!(other.schema_ == schema_)) throw DomainError("cannot merge compressed partials with different schemas");
  for (std::size_t slot = 0; slot < other.slots_; ++slot) {
    const auto& a = other.accs_[slot];
    const std::size_t mine = locate(other.key_at(slot));
    Acc& m = accs_[mine];
    m.n += a.n;
    m.y.merge(a.y);
    m.yy.merge(a.yy);
  }
  total_rows_ += other.total_rows_;
  runs_.insert(runs_.end(), other.runs_.begin(), other.runs_.end());
  other.runs_.clear();
  other.clear_table();
  other.total_rows_ = 0;
}

CompressedDesign Compressor::finish() && {
  CompressedDesign out;
  out.schema = schema_;
  out.total_rows = total_rows_;

  auto emit = [&](std::span<const double> key, std::int64_t n, const CompensatedSum& y, const CompensatedSum& yy) {
    out.strata.push_back(StratumRecord{{key.begin(), key.end()}, n, y.value(), yy.value()});
  };

  if (runs_.empty()) {
    out.strata.reserve(slots_);
    for (const std::size_t slot : sorted_slots()) emit(key_at(slot), accs_[slot].n, accs_[slot].y, accs_[slot].yy);
    clear_table();
    return out;
  }

  if (slots_ > 0) spill();
  std::vector<RunReader> readers;
  readers.reserve(runs_.size());
  for (const auto& run : runs_) readers.emplace_back(run, width_);
  auto greater = [&](std::size_t a, std::size_t b) {
    return key_less(readers[b].current().key, readers[a].current().key);
  };
  std::priority_queue<std::size_t, std::vector<std::size_t>, decltype(greater)> heap(greater);
  for (std::size_t r = 0; r < readers.size(); ++r) {
    if (readers[r].next()) heap.push(r);
  }
  RunRecord pending;
  bool have_pending = false;
  while (!heap.empty()) {
    const std::size_t r = heap.top();
    heap.pop();
    const RunRecord& rec = readers[r].current();
    if (have_pending && keys_equal(pending.key, rec.key)) {
      pending.n += rec.n;
      pending.y.merge(rec.y);
      pending.yy.merge(rec.yy);
    } else {
      if (have_pending) emit(pending.key, pending.n, pending.y, pending.yy);
      pending = rec;
      have_pending = true;
    }
    if (readers[r].next()) heap.push(r);
  }
  if (have_pending) emit(pending.key, pending.n, pending.y, pending.yy);
  return out;
}

CompressedDesign compress_rows(const ColumnSchema& schema, std::span<const DesignRow> rows) {
  Compressor c(schema);
  for (const auto& r : rows) c.accumulate(r);
  return std::move(c).finish();
}

CompressedDesign merge(const CompressedDesign& a, const CompressedDesign& b) {
  if (!(a.schema == b.schema)) throw DomainError("cannot merge compressed designs with different schemas");
  CompressedDesign out;
  out.schema = a.schema;
  out.total_rows = a.total_rows + b.total_rows;
  out.source_fingerprint = a.source_fingerprint + b.source_fingerprint;
  out.strata.reserve(a.strata.size() + b.strata.size());
  std::size_t i = 0;
  std::size_t j = 0;
  while (i < a.strata.size() || j < b.strata.size()) {
    if (j == b.strata.size() || (i < a.strata.size() && key_less(a.strata[i].key, b.strata[j].key))) {
      out.strata.push_back(a.strata[i++]);
    } else if (i == a.strata.size() || key_less(b.strata[j].key, a.strata[i].key)) {
      out.strata.push_back(b.strata[j++]);
    } else {
      StratumRecord s = a.strata[i++];
      const auto& t = b.strata[j++];
      s.n += t.n;
      s.sum_y += t.sum_y;
      s.sum_y_sq += t.sum_y_sq;
      out.strata.push_back(std::move(s));
    }
  }
  return out;
}

std::size_t stratum_count(const DesignShape& shape) {
  switch (shape.kind) {
    case EstimatorKind::kDim:
      return 2;
    case EstimatorKind::kCuped:
      if (!shape.cuped_bins) throw DomainError("CUPED without cuped_bins has no stratum bound");
      return 2 * static_cast<std::size_t>(*shape.cuped_bins);
    case EstimatorKind::kTwmStatic:
      // (W, Wbar_i, Wbar_t) has 2 x 2 x 2 potential values; treated rows in
      // untreated periods and untreated rows of treated units in treated
      // periods cannot occur, leaving 4.
      if (shape.cohorts <= 2) return 4;
      return shape.cohorts * shape.n_periods;
    case EstimatorKind::kDynDim:
      return shape.cohorts * shape.n_post_periods;
    case EstimatorKind::kTwmEvent:
      return 2 * shape.n_periods;
    case EstimatorKind::kTwmCohort:
      return shape.cohorts * shape.n_periods;
  }
  throw DomainError("unsupported estimator kind");
}

void write_compressed_csv(std::ostream& out, const CompressedDesign& design) {
  for (const auto& label : design.schema.labels) out << label << ',';
  out << "n,sum_y,sum_y_sq\n";
  std::string line;
  for (const auto& s : design.strata) {
    line.clear();
    for (double v : s.key) {
      line += format_double(v);
      line += ',';
    }
    line += std::to_string(s.n);
    line += ',';
    line += format_double(s.sum_y);
    line += ',';
    line += format_double(s.sum_y_sq);
    line += '\n';
    out << line;
  }
}

CompressedDesign read_compressed_csv(std::istream& in, EstimatorKind kind, std::int32_t post_start) {
  std::string header;
  if (!std::getline(in, header)) throw ParseError("compressed design has no header", 1);
  if (!header.empty() && header.back() == '\r') header.pop_back();
  std::vector<std::string> names;
  {
    std::stringstream ss(header);
    std::string f;
    while (std::getline(ss, f, ',')) names.push_back(f);
  }
  if (names.size() < 4 || names[names.size() - 3] != "n" || names[names.size() - 2] != "sum_y" ||
      names.back() != "sum_y_sq") {
    throw ParseError("compressed design header must end with n,sum_y,sum_y_sq", 1);
  }
  CompressedDesign out;
  out.schema.kind = kind;
  out.schema.post_start = post_start;
  out.schema.labels.assign(names.begin(), names.end() - 3);
  const std::size_t width = out.schema.size();

  Compressor c(out.schema);
  std::string line;
  std::uint64_t line_no = 1;
  std::vector<double> key(width);
  while (std::getline(in, line)) {
    ++line_no;
    if (!line.empty() && line.back() == '\r') line.pop_back();
    if (line.empty()) continue;
    std::vector<std::string_view> fields;
    std::size_t pos = 0;
    while (true) {
      const auto d = line.find(',', pos);
      fields.emplace_back(line.data() + pos, (d == std::string::npos ? line.size() : d) - pos);
      if (d == std::string::npos) break;
      pos = d + 1;
    }
    if (fields.size() != width + 3) throw ParseError("wrong field count in compressed design", line_no);
    auto num = [&](std::string_view f) {
      double v = 0;
      auto [p, ec] = std::from_chars(f.data(), f.data() + f.size(), v);
      if (ec != std::errc() || p != f.data() + f.size()) throw ParseError("bad number '" + std::string(f) + "'", line_no);
      return v;
    };
    for (std::size_t k = 0; k < width; ++k) key[k] = num(fields[k]);
    std::int64_t n = 0;
    auto [p, ec] = std::from_chars(fields[width].data(), fields[width].data() + fields[width].size(), n);
    if (ec != std::errc() || n < 1) throw ParseError("stratum count must be a positive integer", line_no);
    c.accumulate_stats(key, n, num(fields[width + 1]), num(fields[width + 2]));
  }
  auto done = std::move(c).finish();
  out.strata = std::move(done.strata);
  out.total_rows = done.total_rows;
  return out;
}

}  // namespace panelreg
