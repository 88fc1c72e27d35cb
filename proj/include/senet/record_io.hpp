#ifndef SENET_RECORD_IO_HPP
#define SENET_RECORD_IO_HPP

#include <cstdint>
#include <filesystem>
#include <string>
#include <vector>

#include "senet/record.hpp"

namespace senet::record_io {

// Header text format, one record per file pair:
//   line 1:     "<record_id> <num_leads> <rate_hz> <num_samples>"
//   lines 2-13: "<gain>/mV <baseline> <lead_name>"
//   comments:   "#Age: <int|NaN>", "#Sex: <Female|Male|NaN>",
//               "#Dx: <code>[,<code>...]"
// Missing-value tokens for age/sex: "NaN", "Unknown", empty.
RecordMeta parse_header(const std::string& text);
std::string format_header(const RecordMeta& meta);

// Signal file payload: little-endian signed 16-bit, lead-major.
// millivolts = (raw - baseline) / gain. Labels are left empty.
EcgRecord read_signal(const RecordMeta& meta, const std::vector<std::uint8_t>& bytes);
std::vector<std::uint8_t> encode_signal(const EcgRecord& record);

ClassSet map_labels(const std::vector<std::string>& dx_codes, const ClassMap& map,
                    std::size_t* unknown_tally = nullptr);

EcgRecord load_record(const std::filesystem::path& header_path, const ClassMap& map,
                      std::size_t* unknown_tally = nullptr);
void write_record(const EcgRecord& record, const std::filesystem::path& directory);

struct LoadFailure {
  std::filesystem::path file;
  std::string message;
};

struct DatasetLoad {
  std::vector<EcgRecord> records;  // lexicographic by record_id
  std::vector<LoadFailure> failures;
  std::size_t unknown_code_tally = 0;
};

// Parses every *.hea/*.dat pair under `directory`. Per-file failures are
// collected, not fatal; throws EmptyDataset when nothing parses.
DatasetLoad load_dataset(const std::filesystem::path& directory, const ClassMap& map);

}  // namespace senet::record_io

#endif  // SENET_RECORD_IO_HPP
