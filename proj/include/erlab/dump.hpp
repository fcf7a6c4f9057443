#pragma once

#include <string>
#include <vector>

#include "erlab/metrics.hpp"

namespace erlab {

// Attribution dump files: JSON lines, one record per
// (approach, seed, example, technique, layer).
void write_dump_records(const std::string& path, const std::vector<DumpRecord>& records);
std::vector<DumpRecord> read_dump_records(const std::string& path);

}  // namespace erlab
