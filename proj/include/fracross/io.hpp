#pragma once

#include <json.hpp>

#include <array>
#include <bit>
#include <charconv>
#include <chrono>
#include <cmath>
#include <cstdint>
#include <cstring>
#include <ctime>
#include <filesystem>
#include <fstream>
#include <sstream>
#include <string>
#include <vector>

#include "diagnostics.hpp"
#include "errors.hpp"
#include "grid.hpp"
#include "state.hpp"

#ifndef FRACROSS_VERSION
#define FRACROSS_VERSION "0.0.0"
#endif

namespace fracross {

namespace fs = std::filesystem;

/// Shortest decimal that parses back to the same double.
inline std::string format_double(double v)
{
    if (std::isnan(v)) return "nan";
    if (std::isinf(v)) return v > 0 ? "inf" : "-inf";
    std::array<char, 32> buf{};
    const auto res = std::to_chars(buf.data(), buf.data() + buf.size(), v);
    return std::string(buf.data(), res.ptr);
}

inline double parse_double(const std::string& s)
{
    if (s == "nan") return std::nan("");
    if (s == "inf") return INFINITY;
    if (s == "-inf") return -INFINITY;
    double v = 0.0;
    const char* first = s.data();
    const char* last = s.data() + s.size();
    while (first < last && *first == ' ') ++first;
    while (last > first && (last[-1] == ' ' || last[-1] == '\r')) --last;
    const auto res = std::from_chars(first, last, v);
    if (res.ec != std::errc() || res.ptr != last) throw ValidationError("not a number: '" + s + "'");
    return v;
}

class CsvWriter {
public:
    explicit CsvWriter(const fs::path& path) : out_(path, std::ios::binary)
    {
        if (!out_) throw std::runtime_error("cannot write " + path.string());
    }

    void header(const std::vector<std::string>& cols) { line(cols); }

    void row(const std::vector<double>& values)
    {
        std::vector<std::string> cells;
        cells.reserve(values.size());
        for (double v : values) cells.push_back(format_double(v));
        line(cells);
    }

    void line(const std::vector<std::string>& cells)
    {
        for (std::size_t k = 0; k < cells.size(); ++k) {
            if (k > 0) out_ << ',';
            out_ << cells[k];
        }
        out_ << '\n';
    }

private:
    std::ofstream out_;
};

struct CsvTable {
    std::vector<std::string> columns;
    std::vector<std::vector<double>> rows;

    std::size_t column(const std::string& name) const
    {
        for (std::size_t k = 0; k < columns.size(); ++k) {
            if (columns[k] == name) return k;
        }
        throw ValidationError("CSV has no column '" + name + "'");
    }

    std::vector<double> values(const std::string& name) const
    {
        const std::size_t c = column(name);
        std::vector<double> out;
        out.reserve(rows.size());
        for (const auto& r : rows) out.push_back(r[c]);
        return out;
    }
};

inline std::vector<std::string> split_csv_line(const std::string& line)
{
    std::vector<std::string> cells;
    std::stringstream ss(line);
    std::string cell;
    while (std::getline(ss, cell, ',')) cells.push_back(cell);
    if (!line.empty() && line.back() == ',') cells.emplace_back();
    return cells;
}

inline CsvTable read_csv(const fs::path& path)
{
    std::ifstream in(path);
    if (!in) throw ValidationError("cannot read " + path.string());
    CsvTable table;
    std::string line;
    if (!std::getline(in, line) || line.empty()) throw ValidationError(path.string() + " is empty");
    if (line.back() == '\r') line.pop_back();
    table.columns = split_csv_line(line);
    std::size_t lineno = 1;
    while (std::getline(in, line)) {
        ++lineno;
        if (!line.empty() && line.back() == '\r') line.pop_back();
        if (line.empty()) continue;
        const auto cells = split_csv_line(line);
        if (cells.size() != table.columns.size()) {
            throw ValidationError(path.string() + ":" + std::to_string(lineno) + ": wrong number of columns");
        }
        std::vector<double> row;
        for (const auto& c : cells) row.push_back(parse_double(c));
        table.rows.push_back(std::move(row));
    }
    return table;
}

inline std::vector<std::string> diagnostics_columns(std::size_t species)
{
    std::vector<std::string> cols{"t", "dt"};
    for (std::size_t i = 1; i <= species; ++i) cols.push_back("mass_" + std::to_string(i));
    for (const char* c : {"H", "D", "H_rel", "L1_dist", "clip_l1"}) cols.emplace_back(c);
    return cols;
}

inline std::vector<double> diagnostics_row(const DiagnosticsRecord& r)
{
    std::vector<double> row{r.t, r.dt};
    row.insert(row.end(), r.masses.begin(), r.masses.end());
    for (double v : {r.H, r.D, r.H_rel, r.L1_dist, r.clip_l1}) row.push_back(v);
    return row;
}

inline void write_diagnostics(const fs::path& path, const std::vector<DiagnosticsRecord>& records,
                              std::size_t species)
{
    CsvWriter w(path);
    w.header(diagnostics_columns(species));
    for (const auto& r : records) w.row(diagnostics_row(r));
}

// FRX1 snapshots: 32-byte header
//   char magic[4] = "FRX1"; u32 dim; u32 n0; u32 n1; u32 nfields; u32 reserved; f64 time
// followed by nfields * n0 * n1 little-endian doubles, field-major, row-major within a field.

struct Snapshot {
    int dim = 1;
    std::array<int, 2> n{0, 1};
    double t = 0.0;
    std::vector<std::vector<double>> fields;

    bool grid_matches(const Grid& g) const
    {
        return dim == g.dim() && n[0] == g.resolution(0) && n[1] == g.resolution(1);
    }
};

namespace detail {

template <class T>
T to_little(T v)
{
    if constexpr (std::endian::native == std::endian::big) {
        auto bytes = std::bit_cast<std::array<unsigned char, sizeof(T)>>(v);
        std::reverse(bytes.begin(), bytes.end());
        return std::bit_cast<T>(bytes);
    } else {
        return v;
    }
}

template <class T>
void put(std::ostream& out, T v)
{
    v = to_little(v);
    out.write(reinterpret_cast<const char*>(&v), sizeof(T));
}

template <class T>
T get(std::istream& in)
{
    T v{};
    in.read(reinterpret_cast<char*>(&v), sizeof(T));
    if (!in) throw ValidationError("snapshot is truncated");
    return to_little(v);
}

}  // namespace detail

inline void write_snapshot(const fs::path& path, const SpeciesState& state)
{
    const Grid& grid = state.grid();
    std::ofstream out(path, std::ios::binary);
    if (!out) throw std::runtime_error("cannot write " + path.string());
    out.write("FRX1", 4);
    detail::put<std::uint32_t>(out, static_cast<std::uint32_t>(grid.dim()));
    detail::put<std::uint32_t>(out, static_cast<std::uint32_t>(grid.resolution(0)));
    detail::put<std::uint32_t>(out, static_cast<std::uint32_t>(grid.resolution(1)));
    detail::put<std::uint32_t>(out, static_cast<std::uint32_t>(state.species()));
    detail::put<std::uint32_t>(out, 0u);
    detail::put<double>(out, state.t);
    for (const auto& f : state.fields) {
        for (double v : f.values) detail::put<double>(out, v);
    }

    nlohmann::ordered_json side;
    side["format"] = "FRX1";
    side["dim"] = grid.dim();
    side["resolution"] = grid.dim() == 2 ? std::vector<int>{grid.resolution(0), grid.resolution(1)}
                                         : std::vector<int>{grid.resolution(0)};
    side["extent"] = grid.dim() == 2 ? std::vector<double>{grid.extent(0), grid.extent(1)}
                                     : std::vector<double>{grid.extent(0)};
    side["time"] = state.t;
    side["fields"] = state.species();
    side["masses"] = state.masses;
    side["layout"] = "field-major, index i0*n1+i1, nodes x_j=(j+1/2)L/N";
    side["header_bytes"] = 32;
    std::ofstream js(fs::path(path.string() + ".json"));
    js << side.dump(2) << '\n';
}

inline Snapshot read_snapshot(const fs::path& path)
{
    std::ifstream in(path, std::ios::binary);
    if (!in) throw ValidationError("cannot read snapshot " + path.string());
    char magic[4];
    in.read(magic, 4);
    if (!in || std::memcmp(magic, "FRX1", 4) != 0) throw ValidationError(path.string() + " is not an FRX1 snapshot");
    Snapshot s;
    s.dim = static_cast<int>(detail::get<std::uint32_t>(in));
    s.n[0] = static_cast<int>(detail::get<std::uint32_t>(in));
    s.n[1] = static_cast<int>(detail::get<std::uint32_t>(in));
    const auto nfields = detail::get<std::uint32_t>(in);
    (void)detail::get<std::uint32_t>(in);
    s.t = detail::get<double>(in);
    if (s.dim != 1 && s.dim != 2) throw ValidationError("snapshot has invalid dim");
    const std::size_t total = static_cast<std::size_t>(s.n[0]) * static_cast<std::size_t>(s.n[1]);
    for (std::uint32_t f = 0; f < nfields; ++f) {
        std::vector<double> v(total);
        for (auto& x : v) x = detail::get<double>(in);
        s.fields.push_back(std::move(v));
    }
    return s;
}

// Manifest

inline std::uint64_t fnv1a(const std::string& text)
{
    std::uint64_t h = 14695981039346656037ull;
    for (unsigned char c : text) {
        h ^= c;
        h *= 1099511628211ull;
    }
    return h;
}

inline std::string hex64(std::uint64_t v)
{
    static const char* digits = "0123456789abcdef";
    std::string s(16, '0');
    for (int k = 15; k >= 0; --k) {
        s[k] = digits[v & 0xf];
        v >>= 4;
    }
    return s;
}

inline std::string utc_now()
{
    const auto now = std::chrono::system_clock::now();
    const std::time_t tt = std::chrono::system_clock::to_time_t(now);
    std::tm tm{};
    gmtime_r(&tt, &tm);
    char buf[32];
    std::strftime(buf, sizeof(buf), "%Y-%m-%dT%H:%M:%SZ", &tm);
    return buf;
}

struct RunManifest {
    std::string command;
    std::string config_path;
    std::string config_hash;
    std::string version = FRACROSS_VERSION;
    std::string started = utc_now();
    std::string finished;
    std::string status = "running";
    int exit_code = 0;
    std::string error;
    std::vector<std::string> files;
};

/// Writes manifest.json listing every regular file in the directory.
inline void write_manifest(const fs::path& dir, RunManifest m)
{
    m.finished = utc_now();
    m.files.clear();
    if (fs::exists(dir)) {
        for (const auto& entry : fs::directory_iterator(dir)) {
            if (entry.is_regular_file() && entry.path().filename() != "manifest.json") {
                m.files.push_back(entry.path().filename().string());
            }
        }
    }
    std::sort(m.files.begin(), m.files.end());
    m.files.push_back("manifest.json");
    nlohmann::ordered_json j;
    j["command"] = m.command;
    j["config"] = m.config_path;
    j["config_hash"] = m.config_hash;
    j["version"] = m.version;
    j["started"] = m.started;
    j["finished"] = m.finished;
    j["status"] = m.status;
    j["exit_code"] = m.exit_code;
    if (!m.error.empty()) j["error"] = m.error;
    j["files"] = m.files;
    std::ofstream out(dir / "manifest.json");
    out << j.dump(2) << '\n';
}

/// Matplotlib script plotting one CSV column against t on a log axis.
inline void write_plot_script(const fs::path& path, const std::string& csv_name, const std::string& column,
                              const std::string& png_name)
{
    std::ofstream out(path);
    out << "#!/usr/bin/env python3\n"
           "import csv\n"
           "import os\n"
           "import matplotlib\n"
           "matplotlib.use(\"Agg\")\n"
           "import matplotlib.pyplot as plt\n\n"
           "here = os.path.dirname(os.path.abspath(__file__))\n"
           "with open(os.path.join(here, \""
        << csv_name
        << "\")) as f:\n"
           "    rows = list(csv.DictReader(f))\n"
           "t = [float(r[\"t\"]) for r in rows]\n"
           "y = [float(r[\""
        << column
        << "\"]) for r in rows]\n"
           "pts = [(a, b) for a, b in zip(t, y) if b > 0]\n"
           "plt.semilogy([p[0] for p in pts], [p[1] for p in pts])\n"
           "plt.xlabel(\"t\")\n"
           "plt.ylabel(\""
        << column
        << "\")\n"
           "plt.grid(True, which=\"both\", alpha=0.3)\n"
           "plt.savefig(os.path.join(here, \""
        << png_name << "\"), dpi=120)\n";
}

}  // namespace fracross
