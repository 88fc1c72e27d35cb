#include "senet/record_io.hpp"

#include <algorithm>
#include <cctype>
#include <charconv>
#include <cmath>
#include <fstream>
#include <sstream>

#include "senet/errors.hpp"

namespace senet {

namespace {

std::string trim(const std::string& s) {
  auto b = s.find_first_not_of(" \t\r\n");
  if (b == std::string::npos) return {};
  auto e = s.find_last_not_of(" \t\r\n");
  return s.substr(b, e - b + 1);
}

std::string lower(std::string s) {
  std::transform(s.begin(), s.end(), s.begin(),
                 [](unsigned char c) { return std::tolower(c); });
  return s;
}

bool is_missing_token(const std::string& t) {
  const std::string v = lower(trim(t));
  return v.empty() || v == "nan" || v == "unknown";
}

std::vector<std::string> split(const std::string& s, char sep) {
  std::vector<std::string> out;
  std::string cur;
  std::istringstream is(s);
  while (std::getline(is, cur, sep)) out.push_back(cur);
  return out;
}

long parse_long(const std::string& s, const std::string& what) {
  long v = 0;
  const std::string t = trim(s);
  auto [p, ec] = std::from_chars(t.data(), t.data() + t.size(), v);
  if (ec != std::errc() || p != t.data() + t.size())
    throw MalformedHeader("non-numeric " + what + ": '" + s + "'");
  return v;
}

double parse_double(const std::string& s, const std::string& what) {
  const std::string t = trim(s);
  try {
    std::size_t pos = 0;
    double v = std::stod(t, &pos);
    if (pos != t.size()) throw std::invalid_argument(t);
    return v;
  } catch (const std::exception&) {
    throw MalformedHeader("non-numeric " + what + ": '" + s + "'");
  }
}

}  // namespace

// ---- ClassMap ----------------------------------------------------------

ClassMap ClassMap::from_entries(std::vector<ClassMapEntry> entries) {
  ClassMap m;
  m.entries_ = std::move(entries);
  for (std::size_t ei = 0; ei < m.entries_.size(); ++ei) {
    const auto& e = m.entries_[ei];
    if (e.abbreviation.empty()) throw MalformedHeader("class map: empty abbreviation");
    for (const auto& code : e.codes) {
      if (!m.code_to_entry_.emplace(code, ei).second)
        throw MalformedHeader("class map: code '" + code + "' appears twice");
    }
    if (e.scored) {
      const std::size_t ci = m.scored_abbrevs_.size();
      m.scored_abbrevs_.push_back(e.abbreviation);
      m.scored_entry_index_.push_back(ei);
      for (const auto& code : e.codes) m.code_to_class_.emplace(code, ci);
    }
  }
  if (m.scored_abbrevs_.size() != kNumClasses)
    throw MalformedHeader("class map: expected " + std::to_string(kNumClasses) +
                          " scored classes, got " +
                          std::to_string(m.scored_abbrevs_.size()));
  auto it = std::find(m.scored_abbrevs_.begin(), m.scored_abbrevs_.end(), "SNR");
  if (it == m.scored_abbrevs_.end())
    throw MalformedHeader("class map: no SNR (normal) class");
  m.normal_index_ = static_cast<std::size_t>(it - m.scored_abbrevs_.begin());
  return m;
}

ClassMap ClassMap::load(const std::filesystem::path& file) {
  std::ifstream in(file);
  if (!in) throw MalformedHeader("cannot open class map: " + file.string());
  std::vector<ClassMapEntry> entries;
  std::string line;
  while (std::getline(in, line)) {
    line = trim(line);
    if (line.empty() || line[0] == '#') continue;
    auto fields = split(line, ',');
    if (fields.size() != 3)
      throw MalformedHeader("class map line needs 3 fields: '" + line + "'");
    ClassMapEntry e;
    e.abbreviation = trim(fields[0]);
    for (auto& c : split(fields[1], '|')) {
      const std::string code = trim(c);
      if (!code.empty()) e.codes.push_back(code);
    }
    const std::string flag = trim(fields[2]);
    if (flag != "0" && flag != "1")
      throw MalformedHeader("class map scored flag must be 0/1: '" + line + "'");
    e.scored = flag == "1";
    entries.push_back(std::move(e));
  }
  return from_entries(std::move(entries));
}

const ClassMap& ClassMap::builtin() {
  // PhysioNet/CinC 2020 scored classes; CRBBB/RBBB, PAC/SVPB and PVC/VPB
  // carry equivalent code pairs and collapse to one class each.
  static const ClassMap map = [] {
    std::vector<ClassMapEntry> e = {
        {"IAVB", {"270492004"}, true},
        {"AF", {"164889003"}, true},
        {"AFL", {"164890007"}, true},
        {"Brady", {"426627000"}, true},
        {"CRBBB", {"713427006", "59118001"}, true},
        {"IRBBB", {"713426002"}, true},
        {"LAnFB", {"445118002"}, true},
        {"LAD", {"39732003"}, true},
        {"LBBB", {"164909002"}, true},
        {"LQRSV", {"251146004"}, true},
        {"NSIVCB", {"698252002"}, true},
        {"PR", {"10370003"}, true},
        {"PAC", {"284470004", "63593006"}, true},
        {"PVC", {"427172004", "17338001"}, true},
        {"LQT", {"111975006"}, true},
        {"QAb", {"164917005"}, true},
        {"RAD", {"47665007"}, true},
        {"SA", {"427393009"}, true},
        {"SB", {"426177001"}, true},
        {"SNR", {"426783006"}, true},
        {"STach", {"427084000"}, true},
        {"TAb", {"164934002"}, true},
        {"TInv", {"59931005"}, true},
        {"LPR", {"164947007"}, true},
    };
    return ClassMap::from_entries(std::move(e));
  }();
  return map;
}

std::optional<std::size_t> ClassMap::class_of_code(const std::string& code) const {
  auto it = code_to_class_.find(code);
  if (it == code_to_class_.end()) return std::nullopt;
  return it->second;
}

bool ClassMap::knows_code(const std::string& code) const {
  return code_to_entry_.count(code) > 0;
}

std::optional<std::size_t> ClassMap::class_of_abbreviation(const std::string& abbrev) const {
  auto it = std::find(scored_abbrevs_.begin(), scored_abbrevs_.end(), abbrev);
  if (it == scored_abbrevs_.end()) return std::nullopt;
  return static_cast<std::size_t>(it - scored_abbrevs_.begin());
}

const std::string& ClassMap::primary_code(std::size_t class_index) const {
  return entries_[scored_entry_index_.at(class_index)].codes.front();
}

namespace record_io {

RecordMeta parse_header(const std::string& text) {
  std::istringstream in(text);
  std::string line;
  if (!std::getline(in, line) || trim(line).empty())
    throw MalformedHeader("header: missing first line");

  RecordMeta meta;
  {
    std::istringstream first(line);
    std::string id, leads, rate, samples;
    if (!(first >> id >> leads >> rate >> samples))
      throw MalformedHeader("header first line needs 4 fields: '" + line + "'");
    meta.record_id = id;
    meta.num_leads = static_cast<int>(parse_long(leads, "lead count"));
    meta.sampling_rate_hz = static_cast<int>(parse_long(rate, "sampling rate"));
    const long n = parse_long(samples, "sample count");
    if (n < 1) throw MalformedHeader("header: sample count must be >= 1");
    meta.num_samples = static_cast<std::size_t>(n);
  }
  if (meta.num_leads != static_cast<int>(kNumLeads))
    throw LeadCountMismatch("expected 12 leads, header declares " +
                            std::to_string(meta.num_leads));
  if (meta.sampling_rate_hz < 1)
    throw MalformedHeader("header: sampling rate must be >= 1");

  for (std::size_t lead = 0; lead < kNumLeads; ++lead) {
    if (!std::getline(in, line) || trim(line).empty())
      throw MalformedHeader("header: missing lead line " + std::to_string(lead + 2));
    std::istringstream ls(line);
    std::string gain_tok, baseline_tok, name_tok;
    if (!(ls >> gain_tok >> baseline_tok >> name_tok))
      throw MalformedHeader("header lead line needs 3 fields: '" + line + "'");
    const auto slash = gain_tok.find('/');
    const std::string gain_str = slash == std::string::npos ? gain_tok : gain_tok.substr(0, slash);
    meta.gain[lead] = parse_double(gain_str, "gain");
    if (!(meta.gain[lead] > 0.0))
      throw MalformedHeader("header: gain must be positive: '" + gain_tok + "'");
    meta.baseline[lead] = static_cast<int>(parse_long(baseline_tok, "baseline"));
    meta.lead_names[lead] = name_tok;
  }

  while (std::getline(in, line)) {
    line = trim(line);
    if (line.empty() || line[0] != '#') continue;
    const auto colon = line.find(':');
    if (colon == std::string::npos) continue;
    const std::string key = lower(trim(line.substr(1, colon - 1)));
    const std::string value = trim(line.substr(colon + 1));
    if (key == "age") {
      if (!is_missing_token(value))
        meta.age_years = static_cast<int>(parse_long(value, "age"));
    } else if (key == "sex") {
      if (!is_missing_token(value)) {
        const std::string v = lower(value);
        if (v == "female" || v == "f")
          meta.sex = Sex::female;
        else if (v == "male" || v == "m")
          meta.sex = Sex::male;
        else
          throw MalformedHeader("header: unrecognized sex token '" + value + "'");
      }
    } else if (key == "dx") {
      for (auto& c : split(value, ',')) {
        const std::string code = trim(c);
        if (!code.empty()) meta.dx_codes.push_back(code);
      }
    }
  }
  return meta;
}

std::string format_header(const RecordMeta& meta) {
  std::ostringstream os;
  os << meta.record_id << ' ' << meta.num_leads << ' ' << meta.sampling_rate_hz << ' '
     << meta.num_samples << '\n';
  for (std::size_t lead = 0; lead < kNumLeads; ++lead) {
    os << meta.gain[lead] << "/mV " << meta.baseline[lead] << ' '
       << (meta.lead_names[lead].empty() ? "lead" + std::to_string(lead)
                                         : meta.lead_names[lead])
       << '\n';
  }
  os << "#Age: " << (meta.age_years ? std::to_string(*meta.age_years) : "NaN") << '\n';
  os << "#Sex: " << (meta.sex ? (*meta.sex == Sex::female ? "Female" : "Male") : "NaN")
     << '\n';
  os << "#Dx: ";
  for (std::size_t i = 0; i < meta.dx_codes.size(); ++i)
    os << (i ? "," : "") << meta.dx_codes[i];
  os << '\n';
  return os.str();
}

EcgRecord read_signal(const RecordMeta& meta, const std::vector<std::uint8_t>& bytes) {
  const std::size_t expected = 2 * kNumLeads * meta.num_samples;
  if (bytes.size() != expected)
    throw LengthMismatch("signal for record '" + meta.record_id + "': expected " +
                         std::to_string(expected) + " bytes, got " +
                         std::to_string(bytes.size()));
  EcgRecord rec;
  rec.meta = meta;
  rec.signal = Signal(kNumLeads, meta.num_samples);
  std::size_t p = 0;
  for (std::size_t lead = 0; lead < kNumLeads; ++lead) {
    const double gain = meta.gain[lead];
    const double baseline = meta.baseline[lead];
    double* row = rec.signal.row(lead);
    for (std::size_t i = 0; i < meta.num_samples; ++i, p += 2) {
      const std::uint16_t u =
          static_cast<std::uint16_t>(bytes[p]) |
          static_cast<std::uint16_t>(static_cast<std::uint16_t>(bytes[p + 1]) << 8);
      const double raw = static_cast<double>(static_cast<std::int16_t>(u));
      row[i] = (raw - baseline) / gain;
    }
  }
  return rec;
}

std::vector<std::uint8_t> encode_signal(const EcgRecord& record) {
  const auto& meta = record.meta;
  std::vector<std::uint8_t> bytes;
  bytes.reserve(2 * kNumLeads * meta.num_samples);
  for (std::size_t lead = 0; lead < kNumLeads; ++lead) {
    const double gain = meta.gain[lead];
    const double baseline = meta.baseline[lead];
    const double* row = record.signal.row(lead);
    for (std::size_t i = 0; i < meta.num_samples; ++i) {
      double raw = std::round(row[i] * gain + baseline);
      raw = std::clamp(raw, -32768.0, 32767.0);
      const auto v = static_cast<std::int16_t>(raw);
      const auto u = static_cast<std::uint16_t>(v);
      bytes.push_back(static_cast<std::uint8_t>(u & 0xff));
      bytes.push_back(static_cast<std::uint8_t>(u >> 8));
    }
  }
  return bytes;
}

ClassSet map_labels(const std::vector<std::string>& dx_codes, const ClassMap& map,
                    std::size_t* unknown_tally) {
  ClassSet set;
  for (const auto& code : dx_codes) {
    if (auto ci = map.class_of_code(code)) {
      set.set(*ci);
    } else if (!map.knows_code(code) && unknown_tally) {
      ++*unknown_tally;  // unscored-but-known codes are dropped silently
    }
  }
  return set;
}

EcgRecord load_record(const std::filesystem::path& header_path, const ClassMap& map,
                      std::size_t* unknown_tally) {
  std::ifstream hin(header_path);
  if (!hin) throw MalformedHeader("cannot open header: " + header_path.string());
  std::stringstream hbuf;
  hbuf << hin.rdbuf();
  RecordMeta meta = parse_header(hbuf.str());

  std::filesystem::path dat = header_path;
  dat.replace_extension(".dat");
  std::ifstream din(dat, std::ios::binary);
  if (!din) throw LengthMismatch("cannot open signal file: " + dat.string());
  std::vector<std::uint8_t> bytes((std::istreambuf_iterator<char>(din)),
                                  std::istreambuf_iterator<char>());

  EcgRecord rec = read_signal(meta, bytes);
  rec.labels = map_labels(meta.dx_codes, map, unknown_tally);
  return rec;
}

void write_record(const EcgRecord& record, const std::filesystem::path& directory) {
  std::filesystem::create_directories(directory);
  const auto base = directory / record.meta.record_id;
  {
    std::ofstream out(base.string() + ".hea");
    if (!out) throw DataError("cannot write header: " + base.string() + ".hea");
    out << format_header(record.meta);
  }
  {
    std::ofstream out(base.string() + ".dat", std::ios::binary);
    if (!out) throw DataError("cannot write signal: " + base.string() + ".dat");
    const auto bytes = encode_signal(record);
    out.write(reinterpret_cast<const char*>(bytes.data()),
              static_cast<std::streamsize>(bytes.size()));
  }
}

DatasetLoad load_dataset(const std::filesystem::path& directory, const ClassMap& map) {
  if (!std::filesystem::is_directory(directory))
    throw EmptyDataset("not a directory: " + directory.string());

  std::vector<std::filesystem::path> headers;
  for (const auto& entry : std::filesystem::directory_iterator(directory))
    if (entry.is_regular_file() && entry.path().extension() == ".hea")
      headers.push_back(entry.path());
  std::sort(headers.begin(), headers.end());

  DatasetLoad out;
  for (const auto& h : headers) {
    try {
      out.records.push_back(load_record(h, map, &out.unknown_code_tally));
    } catch (const Error& e) {
      out.failures.push_back({h, e.what()});
    }
  }
  std::sort(out.records.begin(), out.records.end(),
            [](const EcgRecord& a, const EcgRecord& b) {
              return a.meta.record_id < b.meta.record_id;
            });
  if (out.records.empty())
    throw EmptyDataset("no parseable records under " + directory.string());
  return out;
}

}  // namespace record_io
}  // namespace senet
