#include "metrics.hpp"

#include <charconv>
#include <cmath>
#include <fstream>
#include <sstream>

#include <json.hpp>

#include "error.hpp"

namespace sas {

double ppt_score(double top1_percent, std::uint64_t adapter_params) {
    double p = static_cast<double>(adapter_params) / 1e7;
    return (top1_percent / 100.0) * std::exp(-std::log10(1.0 + p));
}

bool same_outcome(const RunResult& a, const RunResult& b) {
    return a.variant == b.variant && a.adapter_params == b.adapter_params && a.top1 == b.top1 &&
           a.ppt == b.ppt && a.seed == b.seed && a.config_hash == b.config_hash;
}

std::string format_double(double v) {
    char buf[64];
    auto res = std::to_chars(buf, buf + sizeof(buf), v);
    return std::string(buf, res.ptr);
}

std::uint64_t fnv1a(std::string_view s) {
    std::uint64_t h = 0xCBF29CE484222325ull;
    for (unsigned char c : s) {
        h ^= c;
        h *= 0x100000001B3ull;
    }
    return h;
}

std::string hash_hex(std::string_view s) {
    static const char* digits = "0123456789abcdef";
    std::uint64_t h = fnv1a(s);
    std::string out(16, '0');
    for (int i = 15; i >= 0; --i) {
        out[static_cast<std::size_t>(i)] = digits[h & 0xF];
        h >>= 4;
    }
    return out;
}

namespace {

std::string jsonl_path_for(const std::string& csv_path) {
    if (csv_path.size() > 4 && csv_path.ends_with(".csv"))
        return csv_path.substr(0, csv_path.size() - 4) + ".jsonl";
    return csv_path + ".jsonl";
}

}  // namespace

void emit_results(const std::vector<RunResult>& results, const std::string& path) {
    std::ostringstream csv;
    csv << "variant,adapter_params,top1,ppt,seed,config_hash,wall_time\n";
    for (const auto& r : results) {
        csv << r.variant << ',' << r.adapter_params << ',' << format_double(r.top1) << ','
            << format_double(r.ppt) << ',' << r.seed << ',' << r.config_hash << ','
            << format_double(r.wall_time) << '\n';
    }
    std::ofstream out(path, std::ios::trunc);
    if (!out) throw IoError("cannot open results file for writing: " + path);
    out << csv.str();
    if (!out) throw IoError("short write to results file: " + path);

    std::string jpath = jsonl_path_for(path);
    std::ofstream jout(jpath, std::ios::trunc);
    if (!jout) throw IoError("cannot open results log for writing: " + jpath);
    for (const auto& r : results) {
        nlohmann::ordered_json j;
        j["variant"] = r.variant;
        j["adapter_params"] = r.adapter_params;
        j["top1"] = r.top1;
        j["ppt"] = r.ppt;
        j["seed"] = r.seed;
        j["config_hash"] = r.config_hash;
        j["wall_time"] = r.wall_time;
        jout << j.dump() << '\n';
    }
    if (!jout) throw IoError("short write to results log: " + jpath);
}

std::vector<RunResult> parse_results_csv(const std::string& path) {
    std::ifstream in(path);
    if (!in) throw IoError("cannot open results file: " + path);
    std::string line;
    if (!std::getline(in, line) || line != "variant,adapter_params,top1,ppt,seed,config_hash,wall_time")
        throw DataError("results file has an unexpected header: " + path);
    std::vector<RunResult> out;
    while (std::getline(in, line)) {
        if (line.empty()) continue;
        std::vector<std::string> fields;
        std::size_t start = 0;
        for (;;) {
            std::size_t comma = line.find(',', start);
            fields.push_back(line.substr(start, comma - start));
            if (comma == std::string::npos) break;
            start = comma + 1;
        }
        if (fields.size() != 7) throw DataError("results row has wrong field count: " + line);
        RunResult r;
        r.variant = fields[0];
        auto parse_u64 = [&](const std::string& s) {
            std::uint64_t v = 0;
            auto res = std::from_chars(s.data(), s.data() + s.size(), v);
            if (res.ec != std::errc() || res.ptr != s.data() + s.size())
                throw DataError("bad integer field in results row: " + s);
            return v;
        };
        auto parse_f64 = [&](const std::string& s) {
            double v = 0;
            auto res = std::from_chars(s.data(), s.data() + s.size(), v);
            if (res.ec != std::errc() || res.ptr != s.data() + s.size())
                throw DataError("bad float field in results row: " + s);
            return v;
        };
        r.adapter_params = parse_u64(fields[1]);
        r.top1 = parse_f64(fields[2]);
        r.ppt = parse_f64(fields[3]);
        r.seed = parse_u64(fields[4]);
        r.config_hash = fields[5];
        r.wall_time = parse_f64(fields[6]);
        out.push_back(std::move(r));
    }
    return out;
}

}  // namespace sas
