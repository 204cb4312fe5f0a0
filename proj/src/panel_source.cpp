#include <algorithm>
#include <array>
#include <bit>
#include <charconv>
#include <cstring>
#include <fstream>
#include <string>
#include <vector>

#include "panelreg/error.hpp"
#include "panelreg/numeric.hpp"
#include "panelreg/panel.hpp"

namespace panelreg {

namespace {

constexpr std::size_t kBatchRows = 8192;
constexpr std::size_t kReadBlock = 1 << 22;
constexpr std::array<char, 4> kPackedMagic = {'P', 'N', 'L', '1'};
constexpr std::size_t kPackedRecord = 4 + 2 + 8 + 1;

static_assert(std::endian::native == std::endian::little || std::endian::native == std::endian::big);

template <typename T>
T load_le(const char* p) {
  T v;
  std::memcpy(&v, p, sizeof(T));
  if constexpr (std::endian::native == std::endian::big) {
    auto bytes = std::bit_cast<std::array<char, sizeof(T)>>(v);
    std::reverse(bytes.begin(), bytes.end());
    v = std::bit_cast<T>(bytes);
  }
  return v;
}

template <typename T>
void store_le(char* p, T v) {
  auto bytes = std::bit_cast<std::array<char, sizeof(T)>>(v);
  if constexpr (std::endian::native == std::endian::big) std::reverse(bytes.begin(), bytes.end());
  std::memcpy(p, bytes.data(), sizeof(T));
}

std::string_view trim_field(std::string_view f) {
  while (!f.empty() && (f.back() == '\r' || f.back() == ' ' || f.back() == '\t')) f.remove_suffix(1);
  while (!f.empty() && (f.front() == ' ' || f.front() == '\t')) f.remove_prefix(1);
  if (f.size() >= 2 && f.front() == '"' && f.back() == '"') f = f.substr(1, f.size() - 2);
  return f;
}

std::uint64_t file_size_or_throw(const std::filesystem::path& path) {
  std::error_code ec;
  const auto size = std::filesystem::file_size(path, ec);
  if (ec) throw ParseError("cannot open " + path.string() + ": " + ec.message(), 0);
  return size;
}

class CsvSource final : public PanelSource {
 public:
  explicit CsvSource(SourceDescriptor descriptor) : descriptor_(std::move(descriptor)) {
    size_ = file_size_or_throw(descriptor_.uri);
    std::ifstream in(descriptor_.uri, std::ios::binary);
    if (!in) throw ParseError("cannot open " + descriptor_.uri, 0);
    std::string header;
    if (!std::getline(in, header)) throw ParseError("missing header row", 1);
    data_start_ = header.size() + (in.eof() ? 0 : 1);
    if (header.size() >= 3 && header.compare(0, 3, "\xEF\xBB\xBF") == 0) header.erase(0, 3);
    resolve_columns(header);
  }

  const SourceDescriptor& descriptor() const override { return descriptor_; }

  void scan(const RowBatchFn& fn, std::size_t part, std::size_t parts) const override {
    if (parts == 0 || part >= parts) throw ConfigError("invalid partition request");
    std::ifstream in(descriptor_.uri, std::ios::binary);
    if (!in) throw ParseError("cannot open " + descriptor_.uri, 0);
    const std::uint64_t begin = aligned_offset(in, part, parts);
    const std::uint64_t end = aligned_offset(in, part + 1, parts);
    if (begin >= end) return;

    std::vector<PanelRow> batch;
    batch.reserve(kBatchRows);
    std::string buffer;
    std::string carry;
    std::uint64_t offset = begin;
    std::uint64_t line_offset = begin;
    in.clear();
    in.seekg(static_cast<std::streamoff>(begin));
    while (offset < end) {
      const std::size_t want = static_cast<std::size_t>(std::min<std::uint64_t>(kReadBlock, end - offset));
      buffer.resize(want);
      in.read(buffer.data(), static_cast<std::streamsize>(want));
      const auto got = static_cast<std::size_t>(in.gcount());
      if (got == 0) break;
      buffer.resize(got);
      offset += got;
      std::size_t pos = 0;
      while (true) {
        const auto nl = buffer.find('\n', pos);
        if (nl == std::string::npos) {
          carry.append(buffer, pos, std::string::npos);
          break;
        }
        std::string_view line(buffer.data() + pos, nl - pos);
        if (!carry.empty()) {
          carry.append(line);
          parse_line(carry, line_offset, batch);
          carry.clear();
        } else {
          parse_line(line, line_offset, batch);
        }
        line_offset = offset - got + nl + 1;
        pos = nl + 1;
        if (batch.size() >= kBatchRows) {
          fn(batch);
          batch.clear();
        }
      }
    }
    if (!carry.empty()) parse_line(carry, line_offset, batch);
    if (!batch.empty()) fn(batch);
  }

 private:
  void resolve_columns(const std::string& header) {
    std::vector<std::string> names;
    std::size_t pos = 0;
    while (true) {
      const auto d = header.find(descriptor_.delimiter, pos);
      names.emplace_back(trim_field(std::string_view(header).substr(pos, d == std::string::npos ? std::string::npos : d - pos)));
      if (d == std::string::npos) break;
      pos = d + 1;
    }
    n_fields_ = names.size();
    auto find = [&](const std::string& want) {
      const auto it = std::find(names.begin(), names.end(), want);
      if (it == names.end()) throw ParseError("header has no column '" + want + "'", 1);
      return static_cast<std::size_t>(it - names.begin());
    };
    col_unit_ = find(descriptor_.columns.unit);
    col_time_ = find(descriptor_.columns.time);
    col_outcome_ = find(descriptor_.columns.outcome);
    col_treat_ = find(descriptor_.columns.treatment);
  }

  // Start of partition `part`: the first line beginning at or after the
  // proportional byte offset.
  std::uint64_t aligned_offset(std::ifstream& in, std::size_t part, std::size_t parts) const {
    if (part == 0) return data_start_;
    if (part >= parts) return size_;
    const std::uint64_t span = size_ - data_start_;
    std::uint64_t off = data_start_ + span * part / parts;
    if (off <= data_start_) return data_start_;
    in.clear();
    in.seekg(static_cast<std::streamoff>(off - 1));
    char c = 0;
    while (off <= size_ && in.get(c)) {
      if (c == '\n') return off;
      ++off;
    }
    return size_;
  }

  std::uint64_t line_number_at(std::uint64_t byte_offset) const {
    std::ifstream in(descriptor_.uri, std::ios::binary);
    std::uint64_t line = 1;
    std::uint64_t seen = 0;
    std::vector<char> buf(1 << 16);
    while (seen < byte_offset && in) {
      const auto want = static_cast<std::streamsize>(std::min<std::uint64_t>(buf.size(), byte_offset - seen));
      in.read(buf.data(), want);
      const auto got = in.gcount();
      line += static_cast<std::uint64_t>(std::count(buf.data(), buf.data() + got, '\n'));
      seen += static_cast<std::uint64_t>(got);
      if (got == 0) break;
    }
    return line;
  }

  [[noreturn]] void fail(const std::string& what, std::uint64_t byte_offset) const {
    throw ParseError(descriptor_.uri + ": " + what, line_number_at(byte_offset));
  }

  void parse_line(std::string_view line, std::uint64_t byte_offset, std::vector<PanelRow>& out) const {
    if (!line.empty() && line.back() == '\r') line.remove_suffix(1);
    if (line.find_first_not_of(" \t") == std::string_view::npos) return;

    std::array<std::string_view, 4> wanted{};
    std::size_t field = 0;
    std::size_t pos = 0;
    while (true) {
      const auto d = line.find(descriptor_.delimiter, pos);
      const auto f = trim_field(line.substr(pos, d == std::string_view::npos ? std::string_view::npos : d - pos));
      if (field == col_unit_) wanted[0] = f;
      if (field == col_time_) wanted[1] = f;
      if (field == col_outcome_) wanted[2] = f;
      if (field == col_treat_) wanted[3] = f;
      ++field;
      if (d == std::string_view::npos) break;
      pos = d + 1;
    }
    if (field != n_fields_) fail("expected " + std::to_string(n_fields_) + " fields, found " + std::to_string(field), byte_offset);

    PanelRow row;
    if (wanted[0].empty()) fail("empty unit id", byte_offset);
    row.unit_id = unit_id_from_label(wanted[0]);

    const auto t = wanted[1];
    auto [tp, te] = std::from_chars(t.data(), t.data() + t.size(), row.time_id);
    if (te != std::errc() || tp != t.data() + t.size()) fail("time id '" + std::string(t) + "' is not an integer", byte_offset);

    const auto y = wanted[2];
    auto [yp, ye] = std::from_chars(y.data(), y.data() + y.size(), row.outcome);
    if (ye != std::errc() || yp != y.data() + y.size()) fail("outcome '" + std::string(y) + "' is not a number", byte_offset);

    const auto w = wanted[3];
    double wv = -1.0;
    auto [wp, we] = std::from_chars(w.data(), w.data() + w.size(), wv);
    if (we != std::errc() || wp != w.data() + w.size() || (wv != 0.0 && wv != 1.0)) {
      fail("treatment '" + std::string(w) + "' is not 0 or 1", byte_offset);
    }
    row.treatment = wv == 1.0 ? 1 : 0;
    out.push_back(row);
  }

  SourceDescriptor descriptor_;
  std::uint64_t size_ = 0;
  std::uint64_t data_start_ = 0;
  std::size_t n_fields_ = 0;
  std::size_t col_unit_ = 0, col_time_ = 0, col_outcome_ = 0, col_treat_ = 0;
};

class PackedSource final : public PanelSource {
 public:
  explicit PackedSource(SourceDescriptor descriptor) : descriptor_(std::move(descriptor)) {
    const auto size = file_size_or_throw(descriptor_.uri);
    std::ifstream in(descriptor_.uri, std::ios::binary);
    std::array<char, 4> magic{};
    if (!in.read(magic.data(), 4) || magic != kPackedMagic) throw ParseError(descriptor_.uri + ": missing PNL1 magic", 0);
    if ((size - 4) % kPackedRecord != 0) throw ParseError(descriptor_.uri + ": truncated record", (size - 4) / kPackedRecord + 1);
    records_ = (size - 4) / kPackedRecord;
  }

  const SourceDescriptor& descriptor() const override { return descriptor_; }

  void scan(const RowBatchFn& fn, std::size_t part, std::size_t parts) const override {
    if (parts == 0 || part >= parts) throw ConfigError("invalid partition request");
    const std::uint64_t begin = records_ * part / parts;
    const std::uint64_t end = records_ * (part + 1) / parts;
    std::ifstream in(descriptor_.uri, std::ios::binary);
    in.seekg(static_cast<std::streamoff>(4 + begin * kPackedRecord));
    std::vector<char> buf(kBatchRows * kPackedRecord);
    std::vector<PanelRow> batch(kBatchRows);
    for (std::uint64_t at = begin; at < end;) {
      const auto n = static_cast<std::size_t>(std::min<std::uint64_t>(kBatchRows, end - at));
      if (!in.read(buf.data(), static_cast<std::streamsize>(n * kPackedRecord))) {
        throw ParseError(descriptor_.uri + ": short read", at + 1);
      }
      for (std::size_t i = 0; i < n; ++i) {
        const char* p = buf.data() + i * kPackedRecord;
        PanelRow& r = batch[i];
        r.unit_id = load_le<std::uint32_t>(p);
        r.time_id = load_le<std::uint16_t>(p + 4);
        r.outcome = load_le<double>(p + 6);
        const auto w = static_cast<std::uint8_t>(p[14]);
        if (w > 1) throw ParseError(descriptor_.uri + ": treatment is not 0 or 1", at + i + 1);
        r.treatment = w;
      }
      fn(std::span<const PanelRow>(batch.data(), n));
      at += n;
    }
  }

 private:
  SourceDescriptor descriptor_;
  std::uint64_t records_ = 0;
};

}  // namespace

std::string to_string(SourceFormat format) {
  switch (format) {
    case SourceFormat::kCsv: return "csv";
    case SourceFormat::kPackedBinary: return "packed";
    case SourceFormat::kMemory: return "memory";
  }
  return "unknown";
}

SourceFormat parse_source_format(std::string_view name) {
  if (name == "csv") return SourceFormat::kCsv;
  if (name == "packed" || name == "binary" || name == "pnl") return SourceFormat::kPackedBinary;
  throw ConfigError("unknown input format '" + std::string(name) + "' (expected csv or packed)");
}

std::unique_ptr<PanelSource> open_source(const SourceDescriptor& descriptor) {
  switch (descriptor.format) {
    case SourceFormat::kCsv: return std::make_unique<CsvSource>(descriptor);
    case SourceFormat::kPackedBinary: return std::make_unique<PackedSource>(descriptor);
    case SourceFormat::kMemory: break;
  }
  throw ConfigError("memory sources cannot be opened by descriptor");
}

MemorySource::MemorySource(std::vector<PanelRow> rows, std::string name) : rows_(std::move(rows)) {
  descriptor_.uri = std::move(name);
  descriptor_.format = SourceFormat::kMemory;
}

void MemorySource::scan(const RowBatchFn& fn, std::size_t part, std::size_t parts) const {
  if (parts == 0 || part >= parts) throw ConfigError("invalid partition request");
  const std::size_t begin = rows_.size() * part / parts;
  const std::size_t end = rows_.size() * (part + 1) / parts;
  for (std::size_t at = begin; at < end; at += kBatchRows) {
    fn(std::span<const PanelRow>(rows_.data() + at, std::min(kBatchRows, end - at)));
  }
}

std::uint64_t unit_id_from_label(std::string_view label) {
  std::uint64_t v = 0;
  auto [p, ec] = std::from_chars(label.data(), label.data() + label.size(), v);
  if (ec == std::errc() && p == label.data() + label.size() && v < (1ULL << 63)) return v;
  std::uint64_t h = 0xcbf29ce484222325ULL;
  for (unsigned char c : label) h = (h ^ c) * 0x100000001b3ULL;
  return splitmix64(h) | (1ULL << 63);
}

void write_csv(const std::filesystem::path& path, std::span<const PanelRow> rows, const ColumnMap& columns,
               char delimiter) {
  std::ofstream out(path, std::ios::binary);
  if (!out) throw ConfigError("cannot write " + path.string());
  out << columns.unit << delimiter << columns.time << delimiter << columns.outcome << delimiter << columns.treatment
      << '\n';
  std::array<char, 64> num{};
  std::string line;
  for (const auto& r : rows) {
    line.clear();
    line += std::to_string(r.unit_id);
    line += delimiter;
    line += std::to_string(r.time_id);
    line += delimiter;
    auto [p, ec] = std::to_chars(num.data(), num.data() + num.size(), r.outcome);
    line.append(num.data(), p);
    line += delimiter;
    line += r.treatment ? '1' : '0';
    line += '\n';
    out << line;
  }
}

void write_packed(const std::filesystem::path& path, std::span<const PanelRow> rows) {
  std::ofstream out(path, std::ios::binary);
  if (!out) throw ConfigError("cannot write " + path.string());
  out.write(kPackedMagic.data(), 4);
  std::vector<char> buf;
  buf.reserve(kBatchRows * kPackedRecord);
  for (std::size_t i = 0; i < rows.size(); ++i) {
    const auto& r = rows[i];
    if (r.unit_id > 0xffffffffULL || r.time_id < 0 || r.time_id > 0xffff) {
      throw ConfigError("row does not fit the packed format (u32 unit, u16 time)");
    }
    char rec[kPackedRecord];
    store_le<std::uint32_t>(rec, static_cast<std::uint32_t>(r.unit_id));
    store_le<std::uint16_t>(rec + 4, static_cast<std::uint16_t>(r.time_id));
    store_le<double>(rec + 6, r.outcome);
    rec[14] = static_cast<char>(r.treatment);
    buf.insert(buf.end(), rec, rec + kPackedRecord);
    if (buf.size() >= kBatchRows * kPackedRecord) {
      out.write(buf.data(), static_cast<std::streamsize>(buf.size()));
      buf.clear();
    }
  }
  out.write(buf.data(), static_cast<std::streamsize>(buf.size()));
}

}  // namespace panelreg
