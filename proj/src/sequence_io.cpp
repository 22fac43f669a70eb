#include "pixphys/sequence_io.hpp"

#include "binary_io.hpp"

#include <algorithm>
#include <cmath>
#include <fstream>
#include <iomanip>
#include <sstream>

namespace pixphys {

using detail::check_magic;
using detail::check_version;
using detail::open_out;
using detail::Reader;
using detail::RowMajorD;
using detail::RowMajorF;
using detail::write_bytes;
using detail::write_pod;

FileKind peek_file_kind(const std::filesystem::path& path) {
  std::ifstream in(path, std::ios::binary);
  if (!in) return FileKind::Unknown;
  char magic[6] = {};
  in.read(magic, 6);
  if (in.gcount() != 6) return FileKind::Unknown;
  if (std::memcmp(magic, kSequenceMagic, 6) == 0) return FileKind::FrameSequenceFile;
  if (std::memcmp(magic, kFieldMagic, 6) == 0) return FileKind::FieldSeriesFile;
  return FileKind::Unknown;
}

void save_sequence(const FrameSequence& seq, const std::filesystem::path& path) {
  seq.validate();
  std::ofstream out = open_out(path, "save_sequence");

  write_bytes(out, kSequenceMagic, 6);
  write_pod(out, kSequenceVersion);
  write_pod(out, static_cast<std::uint32_t>(seq.height));
  write_pod(out, static_cast<std::uint32_t>(seq.width));
  write_pod(out, static_cast<std::uint64_t>(seq.frames.size()));
  write_pod(out, seq.dt);
  write_pod(out, static_cast<std::uint8_t>(32));  // float precision, bits

  const std::string meta = seq.meta.dump();
  write_pod(out, static_cast<std::uint32_t>(meta.size()));
  write_bytes(out, meta.data(), meta.size());

  for (const Frame& f : seq.frames) {
    const RowMajorF rm = f;
    write_bytes(out, rm.data(), sizeof(float) * static_cast<std::size_t>(rm.size()));
  }
  if (!out) throw std::runtime_error("save_sequence: write failed for " + path.string());
}

FrameSequence load_sequence(const std::filesystem::path& path) {
  Reader r(path, "load_sequence");
  check_magic(r, kSequenceMagic, "load_sequence");
  check_version(r.pod<std::uint16_t>(), kSequenceVersion, "load_sequence");

  FrameSequence seq;
  seq.height = static_cast<int>(r.pod<std::uint32_t>());
  seq.width = static_cast<int>(r.pod<std::uint32_t>());
  const std::uint64_t n = r.pod<std::uint64_t>();
  seq.dt = r.pod<double>();
  const std::uint8_t precision = r.pod<std::uint8_t>();
  if (precision != 32) {
    std::ostringstream msg;
    msg << "load_sequence: unsupported float precision " << int(precision) << " bits";
    throw std::runtime_error(msg.str());
  }

  const std::uint32_t meta_len = r.pod<std::uint32_t>();
  try {
    seq.meta = nlohmann::json::parse(r.str(meta_len));
  } catch (const nlohmann::json::parse_error& e) {
    throw std::runtime_error(std::string("load_sequence: corrupt metadata block: ") + e.what());
  }

  seq.frames.reserve(n);
  RowMajorF rm(seq.height, seq.width);
  for (std::uint64_t i = 0; i < n; ++i) {
    r.read(rm.data(), sizeof(float) * static_cast<std::size_t>(rm.size()));
    seq.frames.emplace_back(rm);
  }
  seq.validate();
  return seq;
}

void save_fields(const FieldSeries& fields, const std::filesystem::path& path) {
  fields.validate();
  if (fields.steps() < 1) throw std::invalid_argument("save_fields: empty series");
  std::ofstream out = open_out(path, "save_fields");

  write_bytes(out, kFieldMagic, 6);
  write_pod(out, kFieldVersion);
  write_pod(out, static_cast<std::uint32_t>(fields.grid.rows));
  write_pod(out, static_cast<std::uint32_t>(fields.grid.cols));
  write_pod(out, fields.grid.dx);
  write_pod(out, fields.grid.dy);
  write_pod(out, static_cast<std::uint64_t>(fields.steps()));
  write_pod(out, fields.times(0));
  write_pod(out, fields.steps() >= 2 ? fields.dt() : 0.0);
  write_pod(out, static_cast<std::uint8_t>(fields.channels.size()));
  for (const std::string& name : fields.channel_names) {
    write_pod(out, static_cast<std::uint16_t>(name.size()));
    write_bytes(out, name.data(), name.size());
  }
  for (const auto& frames : fields.channels)
    for (const Matrix& f : frames) {
      const RowMajorD rm = f;
      write_bytes(out, rm.data(), sizeof(double) * static_cast<std::size_t>(rm.size()));
    }
  if (!out) throw std::runtime_error("save_fields: write failed for " + path.string());
}

FieldSeries load_fields(const std::filesystem::path& path) {
  Reader r(path, "load_fields");
  check_magic(r, kFieldMagic, "load_fields");
  check_version(r.pod<std::uint16_t>(), kFieldVersion, "load_fields");

  FieldSeries fields;
  fields.grid.rows = static_cast<int>(r.pod<std::uint32_t>());
  fields.grid.cols = static_cast<int>(r.pod<std::uint32_t>());
  fields.grid.dx = r.pod<double>();
  fields.grid.dy = r.pod<double>();
  const std::uint64_t steps = r.pod<std::uint64_t>();
  const double t0 = r.pod<double>();
  const double dt = r.pod<double>();
  const std::uint8_t nch = r.pod<std::uint8_t>();

  fields.channel_names.reserve(nch);
  for (int c = 0; c < nch; ++c) {
    const std::uint16_t len = r.pod<std::uint16_t>();
    fields.channel_names.push_back(r.str(len));
  }

  fields.times = uniform_times(t0, dt, static_cast<Eigen::Index>(steps));
  fields.channels.resize(nch);
  RowMajorD rm(fields.grid.rows, fields.grid.cols);
  for (int c = 0; c < nch; ++c) {
    fields.channels[c].reserve(steps);
    for (std::uint64_t t = 0; t < steps; ++t) {
      r.read(rm.data(), sizeof(double) * static_cast<std::size_t>(rm.size()));
      fields.channels[c].emplace_back(rm);
    }
  }
  fields.validate();
  return fields;
}

void export_frames_pgm(const FrameSequence& seq, const std::filesystem::path& directory) {
  seq.validate();
  std::filesystem::create_directories(directory);
  for (std::size_t i = 0; i < seq.frames.size(); ++i) {
    std::ostringstream name;
    name << "frame_" << std::setw(6) << std::setfill('0') << (i + 1) << ".pgm";
    std::ofstream out = open_out(directory / name.str(), "export_frames_pgm");
    out << "P5\n" << seq.width << " " << seq.height << "\n255\n";
    const Frame& f = seq.frames[i];
    for (int r = 0; r < seq.height; ++r)
      for (int c = 0; c < seq.width; ++c)
        out.put(static_cast<char>(std::lround(f(r, c) * 255.0f)));
    if (!out) throw std::runtime_error("export_frames_pgm: write failed in " + directory.string());
  }
}

void save_trajectory_csv(const TrajectorySeries& series, const std::filesystem::path& path,
                         const std::vector<std::string>& column_names) {
  if (!column_names.empty() &&
      static_cast<Eigen::Index>(column_names.size()) != series.dim())
    throw std::invalid_argument("save_trajectory_csv: column name count != state dimension");

  std::ofstream out(path, std::ios::trunc);
  if (!out) throw std::runtime_error("save_trajectory_csv: cannot write " + path.string());
  out << "t";
  for (Eigen::Index j = 0; j < series.dim(); ++j) {
    if (column_names.empty())
      out << ",z" << (j + 1);
    else
      out << "," << column_names[static_cast<std::size_t>(j)];
  }
  out << "\n" << std::setprecision(17);
  for (Eigen::Index i = 0; i < series.samples(); ++i) {
    out << series.times(i);
    for (Eigen::Index j = 0; j < series.dim(); ++j) out << "," << series.states(i, j);
    out << "\n";
  }
  if (!out) throw std::runtime_error("save_trajectory_csv: write failed for " + path.string());
}

TrajectorySeries load_trajectory_csv(const std::filesystem::path& path) {
  std::ifstream in(path);
  if (!in) throw std::runtime_error("load_trajectory_csv: cannot read " + path.string());

  std::string line;
  if (!std::getline(in, line))
    throw std::runtime_error("load_trajectory_csv: empty file " + path.string());
  const auto columns = static_cast<Eigen::Index>(std::count(line.begin(), line.end(), ',') + 1);
  if (columns < 2)
    throw std::runtime_error("load_trajectory_csv: need a time column plus states in " +
                             path.string());

  std::vector<double> cells;
  Eigen::Index rows = 0;
  for (Eigen::Index ln = 2; std::getline(in, line); ++ln) {
    if (line.empty()) continue;
    std::istringstream row(line);
    std::string cell;
    Eigen::Index got = 0;
    while (std::getline(row, cell, ',')) {
      std::size_t used = 0;
      double value = 0.0;
      try {
        value = std::stod(cell, &used);
      } catch (const std::exception&) {
        used = 0;
      }
      if (used == 0)
        throw std::runtime_error("load_trajectory_csv: non-numeric cell '" + cell + "' at " +
                                 path.string() + ":" + std::to_string(ln));
      cells.push_back(value);
      ++got;
    }
    if (got != columns)
      throw std::runtime_error("load_trajectory_csv: ragged row at " + path.string() + ":" +
                               std::to_string(ln));
    ++rows;
  }
  if (rows == 0) throw std::runtime_error("load_trajectory_csv: no data rows in " + path.string());

  TrajectorySeries series;
  series.times.resize(rows);
  series.states.resize(rows, columns - 1);
  for (Eigen::Index i = 0; i < rows; ++i) {
    series.times(i) = cells[static_cast<std::size_t>(i * columns)];
    for (Eigen::Index j = 1; j < columns; ++j)
      series.states(i, j - 1) = cells[static_cast<std::size_t>(i * columns + j)];
  }
  series.validate();
  return series;
}

}  // namespace pixphys
