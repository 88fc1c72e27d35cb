#ifndef SENET_RECORD_HPP
#define SENET_RECORD_HPP

#include <array>
#include <bitset>
#include <cstddef>
#include <filesystem>
#include <optional>
#include <string>
#include <unordered_map>
#include <vector>

namespace senet {

inline constexpr std::size_t kNumLeads = 12;
inline constexpr std::size_t kNumClasses = 24;

enum class Sex { female, male };

// Lead-major sample matrix in millivolts.
struct Signal {
  std::size_t leads = 0;
  std::size_t samples = 0;
  std::vector<double> data;  // row-major, leads x samples

  Signal() = default;
  Signal(std::size_t l, std::size_t n) : leads(l), samples(n), data(l * n, 0.0) {}

  double& at(std::size_t lead, std::size_t i) { return data[lead * samples + i]; }
  double at(std::size_t lead, std::size_t i) const { return data[lead * samples + i]; }
  double* row(std::size_t lead) { return data.data() + lead * samples; }
  const double* row(std::size_t lead) const { return data.data() + lead * samples; }
};

struct Demographics {
  std::optional<int> age_years;
  std::optional<Sex> sex;
};

struct RecordMeta {
  std::string record_id;
  int num_leads = 0;
  int sampling_rate_hz = 0;
  std::size_t num_samples = 0;
  std::array<double, kNumLeads> gain{};      // ADC units per millivolt
  std::array<int, kNumLeads> baseline{};     // ADC units
  std::array<std::string, kNumLeads> lead_names{};
  std::optional<int> age_years;
  std::optional<Sex> sex;
  std::vector<std::string> dx_codes;

  Demographics demographics() const { return Demographics{age_years, sex}; }
};

// Membership over the 24 scored classes, indexed in canonical class order.
struct ClassSet {
  std::bitset<kNumClasses> membership;

  bool test(std::size_t i) const { return membership.test(i); }
  void set(std::size_t i, bool v = true) { membership.set(i, v); }
  std::size_t count() const { return membership.count(); }
  bool empty() const { return membership.none(); }
  bool operator==(const ClassSet& o) const { return membership == o.membership; }
};

struct EcgRecord {
  RecordMeta meta;
  Signal signal;   // 12 x num_samples, millivolts
  ClassSet labels;
};

struct ClassMapEntry {
  std::string abbreviation;
  std::vector<std::string> codes;  // equivalent diagnosis codes
  bool scored = false;
};

// Class table loaded from a class-map file. The scored entries, in file
// order, define the canonical class indices 0..23.
class ClassMap {
 public:
  static ClassMap load(const std::filesystem::path& file);
  static ClassMap from_entries(std::vector<ClassMapEntry> entries);
  static const ClassMap& builtin();  // canonical 24-class table

  const std::vector<ClassMapEntry>& entries() const { return entries_; }
  const std::vector<std::string>& scored_abbreviations() const { return scored_abbrevs_; }
  std::size_t normal_class_index() const { return normal_index_; }

  // Canonical class index for a code; nullopt for unscored or unknown codes.
  std::optional<std::size_t> class_of_code(const std::string& code) const;
  bool knows_code(const std::string& code) const;  // true also for unscored codes
  std::optional<std::size_t> class_of_abbreviation(const std::string& abbrev) const;
  // First equivalent code of a scored class, used when writing headers.
  const std::string& primary_code(std::size_t class_index) const;

 private:
  std::vector<ClassMapEntry> entries_;
  std::vector<std::string> scored_abbrevs_;       // canonical order
  std::vector<std::size_t> scored_entry_index_;   // class index -> entries_ index
  std::unordered_map<std::string, std::size_t> code_to_class_;  // scored codes only
  std::unordered_map<std::string, std::size_t> code_to_entry_;  // all codes
  std::size_t normal_index_ = 0;
};

}  // namespace senet

#endif  // SENET_RECORD_HPP
