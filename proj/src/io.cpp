#include "domdec/io.hpp"

#include <cstdio>
#include <cstdlib>
#include <istream>
#include <ostream>
#include <sstream>
#include <stdexcept>

#include "json.hpp"

namespace domdec {

std::string format_double(double v) {
    char buf[32];
    for (int prec = 15; prec <= 17; ++prec) {
        std::snprintf(buf, sizeof buf, "%.*g", prec, v);
        if (std::strtod(buf, nullptr) == v) break;
    }
    return buf;
}

std::string header_line(const CsvHeader& h) {
    nlohmann::ordered_json j;
    j["n"] = h.n;
    j["d"] = h.d;
    j["iteration"] = h.iteration;
    j["eps"] = h.eps;
    return "# " + j.dump();
}

CsvHeader parse_header_line(const std::string& line) {
    if (line.rfind("# ", 0) != 0) throw std::runtime_error("csv: missing header line");
    const auto j = nlohmann::json::parse(line.substr(2));
    CsvHeader h;
    h.n = j.at("n").get<int>();
    h.d = j.at("d").get<int>();
    h.iteration = j.at("iteration").get<long>();
    h.eps = j.at("eps").get<double>();
    return h;
}

namespace {

std::vector<double> split_numbers(const std::string& line) {
    std::vector<double> v;
    std::stringstream ss(line);
    std::string cell;
    while (std::getline(ss, cell, ',')) v.push_back(std::stod(cell));
    return v;
}

void column_names(std::ostream& os, char prefix, int d) {
    for (int l = 0; l < d; ++l) os << prefix << l << ',';
}

}  // namespace

void write_measure_csv(std::ostream& os, const DiscreteMeasure& m, const CsvHeader& h) {
    os << header_line(h) << '\n';
    column_names(os, 'x', m.dim());
    os << "w\n";
    for (std::size_t i = 0; i < m.size(); ++i) {
        for (double c : m.points()[i]) os << format_double(c) << ',';
        os << format_double(m.weight(i)) << '\n';
    }
}

DiscreteMeasure read_measure_csv(std::istream& is, CsvHeader* hdr) {
    std::string line;
    if (!std::getline(is, line)) throw std::runtime_error("csv: empty input");
    const CsvHeader h = parse_header_line(line);
    if (hdr) *hdr = h;
    std::getline(is, line);  // column names
    std::vector<double> coords, w;
    while (std::getline(is, line)) {
        if (line.empty()) continue;
        const auto v = split_numbers(line);
        if (v.size() != static_cast<std::size_t>(h.d) + 1) throw std::runtime_error("csv: bad measure row");
        coords.insert(coords.end(), v.begin(), v.end() - 1);
        w.push_back(v.back());
    }
    return DiscreteMeasure(make_support(h.d, std::move(coords)), std::move(w));
}

void write_coupling_csv(std::ostream& os, const Coupling& pi, const CsvHeader& h) {
    os << header_line(h) << '\n';
    os << "i,j,";
    column_names(os, 'x', pi.x_points().dim());
    column_names(os, 'y', pi.y_points().dim());
    os << "w\n";
    for (std::size_t i = 0; i < pi.rows(); ++i)
        for (const auto& e : pi.row(i)) {
            os << i << ',' << e.y << ',';
            for (double c : pi.x_points()[i]) os << format_double(c) << ',';
            for (double c : pi.y_points()[e.y]) os << format_double(c) << ',';
            os << format_double(e.w) << '\n';
        }
}

Coupling read_coupling_csv(std::istream& is, SupportPtr x, SupportPtr y, CsvHeader* hdr) {
    std::string line;
    if (!std::getline(is, line)) throw std::runtime_error("csv: empty input");
    const CsvHeader h = parse_header_line(line);
    if (hdr) *hdr = h;
    std::getline(is, line);
    std::vector<SparseRow> rows(x->size());
    const std::size_t width = 3 + static_cast<std::size_t>(x->dim() + y->dim());
    while (std::getline(is, line)) {
        if (line.empty()) continue;
        const auto v = split_numbers(line);
        if (v.size() != width) throw std::runtime_error("csv: bad coupling row");
        const auto i = static_cast<std::size_t>(v[0]);
        const auto j = static_cast<std::uint32_t>(v[1]);
        if (i >= rows.size() || j >= y->size()) throw std::runtime_error("csv: index out of range");
        rows[i].push_back({j, v.back()});
    }
    return Coupling(std::move(x), std::move(y), std::move(rows));
}

}  // namespace domdec
