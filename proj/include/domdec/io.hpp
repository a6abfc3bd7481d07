#pragma once

#include <iosfwd>
#include <string>

#include "domdec/measure.hpp"

namespace domdec {

// Metadata written as a JSON object on the first line of every CSV, prefixed by "# ".
struct CsvHeader {
    int n = 0;
    int d = 0;
    long iteration = 0;
    double eps = 0.0;
};

// Shortest decimal form that round-trips a double.
std::string format_double(double v);

// Columns: x0..x{d-1}, w
void write_measure_csv(std::ostream& os, const DiscreteMeasure& m, const CsvHeader& h);
DiscreteMeasure read_measure_csv(std::istream& is, CsvHeader* h = nullptr);

// Columns: i, j, x0.., y0.., w  (one line per stored entry)
void write_coupling_csv(std::ostream& os, const Coupling& pi, const CsvHeader& h);
// Reads back onto the given supports (atoms i, support indices j).
Coupling read_coupling_csv(std::istream& is, SupportPtr x, SupportPtr y, CsvHeader* h = nullptr);

std::string header_line(const CsvHeader& h);
CsvHeader parse_header_line(const std::string& line);

}  // namespace domdec
