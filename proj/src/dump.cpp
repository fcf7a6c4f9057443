#include "erlab/dump.hpp"

#include <fstream>
#include <stdexcept>

#include "json.hpp"

namespace erlab {

using ordered_json = nlohmann::ordered_json;

void write_dump_records(const std::string& path, const std::vector<DumpRecord>& records) {
    std::ofstream out(path, std::ios::binary);
    if (!out) throw std::runtime_error("cannot write dump " + path);
    for (const DumpRecord& r : records) {
        ordered_json j;
        j["approach"] = r.approach;
        j["seed"] = r.seed;
        j["example"] = r.example;
        j["technique"] = r.technique;
        j["layer"] = r.layer;
        j["scores"] = r.scores;
        out << j.dump() << "\n";
    }
}

std::vector<DumpRecord> read_dump_records(const std::string& path) {
    std::ifstream in(path, std::ios::binary);
    if (!in) throw std::runtime_error("cannot read dump " + path);
    std::vector<DumpRecord> records;
    std::string line;
    int lineno = 0;
    while (std::getline(in, line)) {
        ++lineno;
        if (line.empty()) continue;
        ordered_json j;
        try {
            j = ordered_json::parse(line);
        } catch (const nlohmann::json::parse_error& e) {
            throw std::runtime_error(path + ":" + std::to_string(lineno) + ": malformed JSON (" +
                                     e.what() + ")");
        }
        DumpRecord r;
        r.approach = j.at("approach").get<std::string>();
        r.seed = j.at("seed").get<uint64_t>();
        r.example = j.at("example").get<int>();
        r.technique = j.at("technique").get<std::string>();
        r.layer = j.at("layer").get<int>();
        r.scores = j.at("scores").get<std::vector<double>>();
        records.push_back(std::move(r));
    }
    return records;
}

}  // namespace erlab
