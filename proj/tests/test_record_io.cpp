#define DOCTEST_CONFIG_IMPLEMENT_WITH_MAIN
#include <doctest.h>

#include <cstdio>
#include <filesystem>
#include <fstream>
#include <random>

#include "senet/errors.hpp"
#include "senet/record_io.hpp"

using namespace senet;
namespace fs = std::filesystem;

namespace {

std::string sample_header(const std::string& extra = "#Age: 50\n#Sex: Male\n#Dx: 39732003\n") {
  std::string h = "rec001 12 500 2000\n";
  for (int i = 0; i < 12; ++i) h += "1000/mV 0 L" + std::to_string(i) + "\n";
  return h + extra;
}

struct TempDir {
  fs::path path;
  TempDir() {
    path = fs::temp_directory_path() /
           ("senet_test_" + std::to_string(std::random_device{}()));
    fs::create_directories(path);
  }
  ~TempDir() { fs::remove_all(path); }
};

}  // namespace

TEST_CASE("parse_header reads demographics and codes") {
  auto meta = record_io::parse_header(sample_header());
  CHECK(meta.record_id == "rec001");
  CHECK(meta.num_leads == 12);
  CHECK(meta.sampling_rate_hz == 500);
  CHECK(meta.num_samples == 2000);
  CHECK(meta.age_years == 50);
  CHECK(meta.sex == Sex::male);
  CHECK(meta.dx_codes == std::vector<std::string>{"39732003"});
  CHECK(meta.gain[0] == doctest::Approx(1000.0));
}

TEST_CASE("parse_header missing-value tokens") {
  auto meta = record_io::parse_header(sample_header("#Age: NaN\n#Sex: NaN\n#Dx: \n"));
  CHECK_FALSE(meta.age_years.has_value());
  CHECK_FALSE(meta.sex.has_value());
  CHECK(meta.dx_codes.empty());

  auto meta2 = record_io::parse_header(sample_header("#Age: Unknown\n#Sex: Unknown\n"));
  CHECK_FALSE(meta2.age_years.has_value());
  CHECK_FALSE(meta2.sex.has_value());

  auto meta3 = record_io::parse_header(sample_header(""));
  CHECK_FALSE(meta3.age_years.has_value());
  CHECK_FALSE(meta3.sex.has_value());

  auto meta4 = record_io::parse_header(sample_header("#Sex: Female\n"));
  CHECK(meta4.sex == Sex::female);
}

TEST_CASE("parse_header error paths") {
  CHECK_THROWS_AS((void)record_io::parse_header(""), MalformedHeader);
  CHECK_THROWS_AS((void)record_io::parse_header("rec 12 abc 100\n"), MalformedHeader);
  CHECK_THROWS_AS((void)record_io::parse_header("rec 12 500\n"), MalformedHeader);

  std::string three_leads = "rec 3 500 100\n";
  for (int i = 0; i < 3; ++i) three_leads += "1000/mV 0 L\n";
  CHECK_THROWS_AS((void)record_io::parse_header(three_leads), LeadCountMismatch);

  // lead lines truncated
  CHECK_THROWS_AS((void)record_io::parse_header("rec 12 500 100\n1000/mV 0 I\n"),
                  MalformedHeader);
}

TEST_CASE("read_signal converts counts to millivolts") {
  RecordMeta meta = record_io::parse_header(sample_header());
  meta.num_samples = 2;
  meta.baseline[1] = 100;
  std::vector<std::uint8_t> bytes(2 * 12 * 2, 0);
  // lead 0, sample 0: raw 1000 -> 1 mV at gain 1000
  bytes[0] = 0xe8;
  bytes[1] = 0x03;
  // lead 1, sample 0: raw -32768 (extreme)
  bytes[4] = 0x00;
  bytes[5] = 0x80;
  auto rec = record_io::read_signal(meta, bytes);
  CHECK(rec.signal.at(0, 0) == doctest::Approx(1.0));
  CHECK(rec.signal.at(0, 1) == doctest::Approx(0.0));
  CHECK(rec.signal.at(1, 0) == doctest::Approx((-32768.0 - 100.0) / 1000.0));
  CHECK(rec.labels.empty());

  bytes.pop_back();
  CHECK_THROWS_AS((void)record_io::read_signal(meta, bytes), LengthMismatch);
}

TEST_CASE("parsed signal values respect the gain bound") {
  RecordMeta meta = record_io::parse_header(sample_header());
  meta.num_samples = 64;
  std::mt19937_64 rng(5);
  std::vector<std::uint8_t> bytes(2 * 12 * 64);
  for (auto& b : bytes) b = static_cast<std::uint8_t>(rng());
  auto rec = record_io::read_signal(meta, bytes);
  double min_gain = meta.gain[0];
  for (double g : meta.gain) min_gain = std::min(min_gain, g);
  for (double v : rec.signal.data) {
    CHECK(std::isfinite(v));
    CHECK(std::abs(v) <= 32768.0 / min_gain + 1e-9);
  }
}

TEST_CASE("map_labels merges equivalent codes and tallies unknowns") {
  const auto& map = ClassMap::builtin();
  const auto rbbb = map.class_of_abbreviation("CRBBB").value();

  // both equivalent RBBB codes set the single merged class once
  auto set = record_io::map_labels({"713427006", "59118001"}, map);
  CHECK(set.test(rbbb));
  CHECK(set.count() == 1);

  CHECK(record_io::map_labels({}, map).empty());

  std::size_t unknown = 0;
  auto set2 = record_io::map_labels({"999999", "39732003"}, map, &unknown);
  CHECK(set2.count() == 1);
  CHECK(set2.test(map.class_of_abbreviation("LAD").value()));
  CHECK(unknown == 1);
}

TEST_CASE("map_labels is idempotent and order independent") {
  const auto& map = ClassMap::builtin();
  std::vector<std::string> codes = {"426783006", "39732003", "426783006"};
  auto a = record_io::map_labels(codes, map);
  std::reverse(codes.begin(), codes.end());
  auto b = record_io::map_labels(codes, map);
  CHECK(a == b);
  CHECK(a.count() == 2);
}

TEST_CASE("builtin class map invariants") {
  const auto& map = ClassMap::builtin();
  CHECK(map.scored_abbreviations().size() == kNumClasses);
  CHECK(map.scored_abbreviations()[map.normal_class_index()] == "SNR");
  CHECK(map.class_of_code("426783006") == map.normal_class_index());
  // merged pairs resolve to one class each
  CHECK(map.class_of_code("284470004") == map.class_of_code("63593006"));
  CHECK(map.class_of_code("427172004") == map.class_of_code("17338001"));
}

TEST_CASE("class map round-trips through its file format") {
  TempDir dir;
  const auto file = dir.path / "class_map.csv";
  {
    std::ofstream out(file);
    const auto& map = ClassMap::builtin();
    for (const auto& e : map.entries()) {
      out << e.abbreviation << ',';
      for (std::size_t i = 0; i < e.codes.size(); ++i) out << (i ? "|" : "") << e.codes[i];
      out << ',' << (e.scored ? 1 : 0) << '\n';
    }
  }
  auto loaded = ClassMap::load(file);
  CHECK(loaded.scored_abbreviations() == ClassMap::builtin().scored_abbreviations());
  CHECK(loaded.normal_class_index() == ClassMap::builtin().normal_class_index());

  // duplicate code rejected
  std::ofstream bad(file);
  bad << "A,1|1,1\n";
  bad.close();
  CHECK_THROWS_AS((void)ClassMap::load(file), MalformedHeader);
}

TEST_CASE("write and reload a record bit-identically") {
  TempDir dir;
  EcgRecord rec;
  rec.meta = record_io::parse_header(sample_header());
  rec.meta.num_samples = 100;
  rec.signal = Signal(12, 100);
  std::mt19937_64 rng(7);
  std::uniform_int_distribution<int> raw(-30000, 30000);
  for (std::size_t l = 0; l < 12; ++l)
    for (std::size_t i = 0; i < 100; ++i)
      rec.signal.at(l, i) = raw(rng) / rec.meta.gain[l];  // exactly quantized values

  record_io::write_record(rec, dir.path);
  auto loaded = record_io::load_record(dir.path / "rec001.hea", ClassMap::builtin());
  CHECK(loaded.meta.record_id == rec.meta.record_id);
  CHECK(loaded.meta.num_samples == rec.meta.num_samples);
  CHECK(loaded.meta.age_years == rec.meta.age_years);
  CHECK(loaded.meta.sex == rec.meta.sex);
  CHECK(loaded.meta.dx_codes == rec.meta.dx_codes);
  for (std::size_t i = 0; i < rec.signal.data.size(); ++i)
    CHECK(loaded.signal.data[i] == rec.signal.data[i]);  // bit-identical raw samples
}

TEST_CASE("load_dataset orders records and collects failures") {
  TempDir dir;
  for (const char* id : {"b_rec", "a_rec", "c_rec"}) {
    EcgRecord rec;
    rec.meta = record_io::parse_header(sample_header());
    rec.meta.record_id = id;
    rec.meta.num_samples = 10;
    rec.signal = Signal(12, 10);
    record_io::write_record(rec, dir.path);
  }
  // one corrupt pair: truncated signal file
  {
    std::ofstream hea(dir.path / "d_rec.hea");
    std::string h = sample_header();
    h.replace(0, 6, "d_rec ");
    hea << h;
    std::ofstream dat(dir.path / "d_rec.dat", std::ios::binary);
    dat << "xx";
  }

  auto loaded = record_io::load_dataset(dir.path, ClassMap::builtin());
  REQUIRE(loaded.records.size() == 3);
  CHECK(loaded.records[0].meta.record_id == "a_rec");
  CHECK(loaded.records[1].meta.record_id == "b_rec");
  CHECK(loaded.records[2].meta.record_id == "c_rec");
  REQUIRE(loaded.failures.size() == 1);
  CHECK(loaded.failures[0].file.filename() == "d_rec.hea");
}

TEST_CASE("load_dataset on an empty directory throws EmptyDataset") {
  TempDir dir;
  CHECK_THROWS_AS((void)record_io::load_dataset(dir.path, ClassMap::builtin()),
                  EmptyDataset);
  CHECK_THROWS_AS((void)record_io::load_dataset(dir.path / "missing", ClassMap::builtin()),
                  EmptyDataset);
}
