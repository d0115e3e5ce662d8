#include "pcrsim/pcr.hpp"

#include "pcrsim/errors.hpp"

namespace pcrsim::pcr {

const char* to_string(Symbol s) {
  switch (s) {
    case Symbol::kZero:
      return "0";
    case Symbol::kOne:
      return "1";
    case Symbol::kMark:
      return "MARK";
    case Symbol::kBlank:
      return "BLANK";
  }
  return "?";
}

void PcrInstance::validate() const {
  if (y.empty()) throw EmptyInput("PCR instance with n = 0");
  if (j < 1 || j > y.size()) throw DimensionMismatch("query index " + std::to_string(j) + " outside [1, n]");
  for (auto b : y)
    if (b > 1) throw FormatError("table entries must be bits");
}

std::string bits_to_string(const Bits& y) {
  std::string s;
  for (auto b : y) s += b ? '1' : '0';
  return s;
}

std::string PcrInstance::to_string() const { return "Y=" + bits_to_string(y) + ";j=" + std::to_string(j); }

PcrInstance PcrInstance::parse(const std::string& text) {
  const auto semi = text.find(';');
  if (text.rfind("Y=", 0) != 0 || semi == std::string::npos || text.compare(semi + 1, 2, "j=") != 0) {
    throw FormatError("expected Y=<bits>;j=<index>, got '" + text + "'");
  }
  PcrInstance inst;
  for (char c : text.substr(2, semi - 2)) {
    if (c != '0' && c != '1') throw FormatError("table must be a 0/1 string in '" + text + "'");
    inst.y.push_back(c == '1');
  }
  const std::string js = text.substr(semi + 3);
  if (js.empty() || js.find_first_not_of("0123456789") != std::string::npos) {
    throw FormatError("bad query index in '" + text + "'");
  }
  inst.j = std::stoul(js);
  inst.validate();
  return inst;
}

std::uint8_t parity(const Bits& y) {
  std::uint8_t p = 0;
  for (auto b : y) p ^= b;
  return p;
}

std::vector<Symbol> encode_prompt(const PcrInstance& inst) {
  inst.validate();
  std::vector<Symbol> out;
  out.reserve(3 * inst.n());
  for (auto b : inst.y) {
    const Symbol s = b ? Symbol::kOne : Symbol::kZero;
    out.push_back(s);
    out.push_back(s);
  }
  for (std::size_t l = 1; l <= inst.n(); ++l) out.push_back(l == inst.j ? Symbol::kMark : Symbol::kBlank);
  return out;
}

bool ground_truth(const PcrInstance& inst) {
  inst.validate();
  return (inst.y[inst.j - 1] ^ parity(inst.y)) == 1;
}

Bits response_vector(const Bits& y) {
  const auto p = parity(y);
  Bits r(y.size());
  for (std::size_t i = 0; i < y.size(); ++i) r[i] = y[i] ^ p;
  return r;
}

PcrInstance parity_projection(const Bits& x) {
  PcrInstance inst;
  inst.y.push_back(0);
  inst.y.insert(inst.y.end(), x.begin(), x.end());
  inst.j = 1;
  return inst;
}

Bits table_from_index(std::uint64_t t, std::size_t n) {
  Bits y(n);
  for (std::size_t i = 0; i < n; ++i) y[i] = (t >> (n - 1 - i)) & 1;
  return y;
}

void for_each_instance(std::size_t n, const std::function<void(const PcrInstance&)>& visit) {
  if (n == 0 || n > 62) throw DimensionMismatch("enumeration needs 1 <= n <= 62");
  for (std::uint64_t t = 0; t < (std::uint64_t{1} << n); ++t) {
    PcrInstance inst{table_from_index(t, n), 1};
    for (std::size_t j = 1; j <= n; ++j) {
      inst.j = j;
      visit(inst);
    }
  }
}

}  // namespace pcrsim::pcr
