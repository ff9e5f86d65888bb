#pragma once

#include <filesystem>
#include <ostream>
#include <string>
#include <string_view>
#include <vector>

namespace lfi {

/// Shortest decimal text that round-trips to the same double.
std::string format_double(double v);

/// RFC 4180 writer: CRLF line ends, fields quoted when they contain a comma,
/// quote, CR or LF.
class CsvWriter {
 public:
  explicit CsvWriter(std::ostream& os) : os_(os) {}
  void row(const std::vector<std::string>& fields);

 private:
  std::ostream& os_;
};

/// Reads an RFC 4180 document into rows of fields.
std::vector<std::vector<std::string>> read_csv(std::istream& is);

void write_text_file(const std::filesystem::path& path, std::string_view text);
std::string read_text_file(const std::filesystem::path& path);

struct SvgSeries {
  std::string name;
  std::vector<double> x;
  std::vector<double> y;
};

/// Standalone SVG scatter plot of one or more point sets.
void write_scatter_svg(const std::filesystem::path& path, const std::vector<SvgSeries>& series,
                       const std::string& title, const std::string& x_label,
                       const std::string& y_label);

/// Standalone SVG polyline plot.
void write_lines_svg(const std::filesystem::path& path, const std::vector<SvgSeries>& series,
                     const std::string& title, const std::string& x_label,
                     const std::string& y_label);

}  // namespace lfi
