#pragma once

#include "pixphys/render.hpp"
#include "pixphys/types.hpp"

#include <filesystem>

namespace pixphys {

/// On-disk containers. Both start with a 6-byte magic + u16 version header;
/// all integers little-endian. Layouts are documented in the README.
inline constexpr char kSequenceMagic[7] = "P2PSEQ";
inline constexpr char kFieldMagic[7] = "P2PFLD";
inline constexpr std::uint16_t kSequenceVersion = 1;
inline constexpr std::uint16_t kFieldVersion = 1;

enum class FileKind { FrameSequenceFile, FieldSeriesFile, Unknown };

/// Reads just enough of the header to classify the file.
FileKind peek_file_kind(const std::filesystem::path& path);

/// Lossless round trip, bit-identical frames/dt/meta.
void save_sequence(const FrameSequence& seq, const std::filesystem::path& path);
FrameSequence load_sequence(const std::filesystem::path& path);

/// Lossless round trip for multi-channel field histories (float64 samples).
void save_fields(const FieldSeries& fields, const std::filesystem::path& path);
FieldSeries load_fields(const std::filesystem::path& path);

/// Writes frames as binary PGM images `frame_000001.pgm`, `frame_000002.pgm`,
/// ... (1-based, zero-padded to 6 digits) for human inspection.
void export_frames_pgm(const FrameSequence& seq, const std::filesystem::path& directory);

/// CSV with header "t,z1,...,zd" (or the given column names), full double
/// precision.
void save_trajectory_csv(const TrajectorySeries& series, const std::filesystem::path& path,
                         const std::vector<std::string>& column_names = {});

/// Inverse of save_trajectory_csv: first column is time, the rest are state
/// dimensions. Raises on a missing file, ragged rows, or non-numeric cells.
TrajectorySeries load_trajectory_csv(const std::filesystem::path& path);

}  // namespace pixphys
