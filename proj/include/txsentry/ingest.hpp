#pragma once

#include <array>
#include <compare>
#include <cstdint>
#include <filesystem>
#include <string>
#include <string_view>
#include <vector>

#include "txsentry/series.hpp"

namespace txsentry {

// Amount in wei. Total ether supply (~1.2e26 wei) does not fit in 64 bits.
class Wei {
 public:
  using Rep = unsigned __int128;

  constexpr Wei() = default;
  constexpr explicit Wei(Rep v) : v_(v) {}

  /// Parses a non-empty string of ASCII digits. Throws std::invalid_argument
  /// on any other character and std::overflow_error above 2^128 - 1.
  static Wei from_decimal(std::string_view digits);
  std::string to_decimal() const;

  /// value / 10^exponent as a double, splitting integer and fractional parts
  /// before the conversion.
  double scaled(int exponent) const;

  constexpr Rep raw() const { return v_; }
  friend constexpr auto operator<=>(const Wei&, const Wei&) = default;

 private:
  Rep v_ = 0;
};

struct Transaction {
  std::string hash;
  std::int64_t timestamp = 0;
  std::string from;
  std::string to;
  Wei value;
  Wei gas_price;
  std::uint64_t gas_limit = 0;

  friend bool operator==(const Transaction&, const Transaction&) = default;
};

enum class FeatureKind { PaymentAmount, GasPrice, GasLimit };

inline constexpr std::array<FeatureKind, 3> kAllFeatures = {
    FeatureKind::PaymentAmount, FeatureKind::GasPrice, FeatureKind::GasLimit};

/// "value", "gasprice", "gaslimit".
std::string_view feature_name(FeatureKind kind);
FeatureKind parse_feature(std::string_view name);

struct ParseOptions {
  // Explorer records with isError == "1" are failed transactions.
  bool keep_failed = true;
};

/// Block-explorer account txlist response: {"result": [ {...}, ... ]}.
/// Returns transactions sorted by (timestamp, hash).
std::vector<Transaction> parse_explorer_json(std::string_view raw,
                                             const ParseOptions& options = {});

/// CSV with header `hash,timestamp,from,to,value,gas_price,gas_limit`.
std::vector<Transaction> read_csv(const std::filesystem::path& path);
std::vector<Transaction> parse_csv(std::string_view text);
void write_csv(std::vector<Transaction> transactions, const std::filesystem::path& path);
std::string format_csv(std::vector<Transaction> transactions);

/// Whole file as bytes; DataError naming the path when it cannot be opened.
std::string read_text_file(const std::filesystem::path& path);

/// Loads a JSON or CSV capture, chosen by the first non-blank character.
std::vector<Transaction> load_transactions(const std::filesystem::path& path,
                                           const ParseOptions& options = {});

void sort_transactions(std::vector<Transaction>& transactions);

/// Sample-domain series of one feature. Payment amounts are in ether, gas
/// prices in gwei, gas limits unscaled.
TimeSeries to_feature_series(const std::vector<Transaction>& transactions,
                             FeatureKind feature);

double feature_value(const Transaction& tx, FeatureKind feature);

}  // namespace txsentry
