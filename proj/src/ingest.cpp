#include "txsentry/ingest.hpp"

#include <algorithm>
#include <fstream>
#include <limits>
#include <sstream>
#include <stdexcept>

#include <json.hpp>

#include "txsentry/error.hpp"

namespace txsentry {

namespace {

constexpr Wei::Rep kMaxRep = ~Wei::Rep{0};

Wei::Rep pow10(int exponent) {
  Wei::Rep p = 1;
  for (int i = 0; i < exponent; ++i) p *= 10;
  return p;
}

bool is_digits(std::string_view s) {
  return !s.empty() &&
         std::all_of(s.begin(), s.end(), [](char c) { return c >= '0' && c <= '9'; });
}

std::int64_t parse_timestamp(std::string_view s) {
  const Wei w = Wei::from_decimal(s);
  if (w.raw() > static_cast<Wei::Rep>(std::numeric_limits<std::int64_t>::max()))
    throw std::overflow_error("timestamp out of range");
  return static_cast<std::int64_t>(w.raw());
}

std::uint64_t parse_u64(std::string_view s) {
  const Wei w = Wei::from_decimal(s);
  if (w.raw() > static_cast<Wei::Rep>(std::numeric_limits<std::uint64_t>::max()))
    throw std::overflow_error("value exceeds 64 bits");
  return static_cast<std::uint64_t>(w.raw());
}

}  // namespace

Wei Wei::from_decimal(std::string_view digits) {
  if (!is_digits(digits)) throw std::invalid_argument("not a decimal integer: '" + std::string(digits) + "'");
  Rep v = 0;
  for (char c : digits) {
    const Rep d = static_cast<Rep>(c - '0');
    if (v > (kMaxRep - d) / 10) throw std::overflow_error("decimal value exceeds 128 bits");
    v = v * 10 + d;
  }
  return Wei(v);
}

std::string Wei::to_decimal() const {
  if (v_ == 0) return "0";
  std::string out;
  for (Rep v = v_; v != 0; v /= 10) out.push_back(static_cast<char>('0' + static_cast<int>(v % 10)));
  std::reverse(out.begin(), out.end());
  return out;
}

double Wei::scaled(int exponent) const {
  const Rep unit = pow10(exponent);
  const Rep whole = v_ / unit;
  const Rep frac = v_ % unit;
  auto to_double = [](Rep r) {
    const auto hi = static_cast<std::uint64_t>(r >> 64);
    const auto lo = static_cast<std::uint64_t>(r);
    return static_cast<double>(hi) * 18446744073709551616.0 + static_cast<double>(lo);
  };
  return to_double(whole) + to_double(frac) / to_double(unit);
}

std::string_view feature_name(FeatureKind kind) {
  switch (kind) {
    case FeatureKind::PaymentAmount: return "value";
    case FeatureKind::GasPrice: return "gasprice";
    case FeatureKind::GasLimit: return "gaslimit";
  }
  return "?";
}

FeatureKind parse_feature(std::string_view name) {
  for (auto k : kAllFeatures)
    if (feature_name(k) == name) return k;
  throw std::invalid_argument("unknown feature '" + std::string(name) + "'");
}

void sort_transactions(std::vector<Transaction>& transactions) {
  std::stable_sort(transactions.begin(), transactions.end(),
                   [](const Transaction& a, const Transaction& b) {
                     if (a.timestamp != b.timestamp) return a.timestamp < b.timestamp;
                     return a.hash < b.hash;
                   });
}

std::vector<Transaction> parse_explorer_json(std::string_view raw,
                                             const ParseOptions& options) {
  nlohmann::json doc;
  try {
    doc = nlohmann::json::parse(raw.begin(), raw.end());
  } catch (const nlohmann::json::parse_error& e) {
    throw ParseError(std::string("malformed JSON: ") + e.what(), e.byte);
  }
  if (!doc.is_object() || !doc.contains("result"))
    throw SchemaError("explorer response has no 'result' member");
  const auto& result = doc["result"];
  if (!result.is_array()) throw SchemaError("'result' is not a list");

  std::vector<Transaction> out;
  out.reserve(result.size());
  for (std::size_t i = 0; i < result.size(); ++i) {
    const auto& rec = result[i];
    if (!rec.is_object()) throw SchemaError("record " + std::to_string(i) + " is not an object");
    auto text = [&](const char* field) -> std::string {
      const auto it = rec.find(field);
      if (it == rec.end())
        throw SchemaError("record " + std::to_string(i) + " lacks required field '" + field + "'");
      if (!it->is_string()) throw FieldError(i, field, "expected a string");
      return it->get<std::string>();
    };
    auto numeric = [&](const char* field, auto&& parse) {
      const std::string s = text(field);
      try {
        return parse(s);
      } catch (const std::exception& e) {
        throw FieldError(i, field, e.what());
      }
    };

    if (!options.keep_failed) {
      const auto it = rec.find("isError");
      if (it != rec.end() && it->is_string() && it->get<std::string>() == "1") continue;
    }

    Transaction tx;
    tx.hash = text("hash");
    tx.timestamp = numeric("timeStamp", parse_timestamp);
    tx.from = text("from");
    tx.to = text("to");
    tx.value = numeric("value", Wei::from_decimal);
    tx.gas_price = numeric("gasPrice", Wei::from_decimal);
    tx.gas_limit = numeric("gas", parse_u64);
    out.push_back(std::move(tx));
  }
  sort_transactions(out);
  return out;
}

namespace {

constexpr std::string_view kCsvHeader = "hash,timestamp,from,to,value,gas_price,gas_limit";

std::vector<std::string_view> split_commas(std::string_view line) {
  std::vector<std::string_view> fields;
  std::size_t start = 0;
  while (true) {
    const auto pos = line.find(',', start);
    if (pos == std::string_view::npos) {
      fields.push_back(line.substr(start));
      break;
    }
    fields.push_back(line.substr(start, pos - start));
    start = pos + 1;
  }
  return fields;
}

}  // namespace

std::vector<Transaction> parse_csv(std::string_view text) {
  std::vector<Transaction> out;
  std::size_t line_no = 0;
  std::size_t pos = 0;
  bool header_seen = false;
  while (pos < text.size()) {
    auto end = text.find('\n', pos);
    if (end == std::string_view::npos) end = text.size();
    std::string_view line = text.substr(pos, end - pos);
    pos = end + 1;
    ++line_no;
    if (!line.empty() && line.back() == '\r') line.remove_suffix(1);
    if (!header_seen) {
      if (line != kCsvHeader)
        throw SchemaError("CSV header must be '" + std::string(kCsvHeader) + "'");
      header_seen = true;
      continue;
    }
    if (line.empty()) continue;
    const auto f = split_commas(line);
    if (f.size() != 7)
      throw RowError(line_no, "expected 7 fields, found " + std::to_string(f.size()));
    const std::size_t record = out.size();
    auto field = [&](std::size_t idx, const char* name, auto&& parse) {
      try {
        return parse(f[idx]);
      } catch (const std::exception& e) {
        throw FieldError(record, name, std::string(e.what()) + " (line " + std::to_string(line_no) + ")");
      }
    };
    Transaction tx;
    tx.hash = std::string(f[0]);
    tx.timestamp = field(1, "timestamp", parse_timestamp);
    tx.from = std::string(f[2]);
    tx.to = std::string(f[3]);
    tx.value = field(4, "value", Wei::from_decimal);
    tx.gas_price = field(5, "gas_price", Wei::from_decimal);
    tx.gas_limit = field(6, "gas_limit", parse_u64);
    out.push_back(std::move(tx));
  }
  if (!header_seen) throw SchemaError("empty CSV: missing header");
  sort_transactions(out);
  return out;
}

std::string read_text_file(const std::filesystem::path& path) {
  std::ifstream in(path, std::ios::binary);
  if (!in) throw DataError("cannot open " + path.string());
  std::ostringstream ss;
  ss << in.rdbuf();
  return ss.str();
}

std::vector<Transaction> read_csv(const std::filesystem::path& path) {
  return parse_csv(read_text_file(path));
}

std::string format_csv(std::vector<Transaction> transactions) {
  sort_transactions(transactions);
  std::string out(kCsvHeader);
  out.push_back('\n');
  for (const auto& tx : transactions) {
    out += tx.hash;
    out += ',' + std::to_string(tx.timestamp);
    out += ',' + tx.from;
    out += ',' + tx.to;
    out += ',' + tx.value.to_decimal();
    out += ',' + tx.gas_price.to_decimal();
    out += ',' + std::to_string(tx.gas_limit);
    out.push_back('\n');
  }
  return out;
}

void write_csv(std::vector<Transaction> transactions, const std::filesystem::path& path) {
  std::ofstream out(path, std::ios::binary);
  if (!out) throw DataError("cannot write " + path.string());
  out << format_csv(std::move(transactions));
  if (!out) throw DataError("write failed: " + path.string());
}

std::vector<Transaction> load_transactions(const std::filesystem::path& path,
                                           const ParseOptions& options) {
  const std::string raw = read_text_file(path);
  const auto first = raw.find_first_not_of(" \t\r\n");
  if (first != std::string::npos && raw[first] == '{') return parse_explorer_json(raw, options);
  return parse_csv(raw);
}

double feature_value(const Transaction& tx, FeatureKind feature) {
  switch (feature) {
    case FeatureKind::PaymentAmount: return tx.value.scaled(18);
    case FeatureKind::GasPrice: return tx.gas_price.scaled(9);
    case FeatureKind::GasLimit: return static_cast<double>(tx.gas_limit);
  }
  return 0.0;
}

TimeSeries to_feature_series(const std::vector<Transaction>& transactions,
                             FeatureKind feature) {
  TimeSeries out;
  out.domain = Domain::sample();
  out.points.reserve(transactions.size());
  for (const auto& tx : transactions) out.points.push_back({tx.timestamp, feature_value(tx, feature)});
  return out;
}

}  // namespace txsentry
