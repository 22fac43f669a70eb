#pragma once

#include <Eigen/Core>

#include <cstdint>
#include <cstring>
#include <filesystem>
#include <fstream>
#include <sstream>
#include <stdexcept>
#include <string>

namespace pixphys::detail {

// On-disk sample order is row-major; Eigen defaults to column-major.
using RowMajorF = Eigen::Matrix<float, Eigen::Dynamic, Eigen::Dynamic, Eigen::RowMajor>;
using RowMajorD = Eigen::Matrix<double, Eigen::Dynamic, Eigen::Dynamic, Eigen::RowMajor>;

inline void write_bytes(std::ofstream& out, const void* p, std::size_t n) {
  out.write(static_cast<const char*>(p), static_cast<std::streamsize>(n));
}

template <typename T>
void write_pod(std::ofstream& out, T v) {
  write_bytes(out, &v, sizeof(T));
}

class Reader {
 public:
  Reader(const std::filesystem::path& path, const char* what) : path_(path), what_(what) {
    in_.open(path, std::ios::binary);
    if (!in_) throw std::runtime_error(std::string(what) + ": cannot open " + path.string());
    in_.seekg(0, std::ios::end);
    size_ = static_cast<std::uint64_t>(in_.tellg());
    in_.seekg(0, std::ios::beg);
  }

  void read(void* p, std::size_t n) {
    if (pos_ + n > size_) {
      std::ostringstream msg;
      msg << what_ << ": truncated file " << path_.string() << " (need " << (pos_ + n)
          << " bytes, found " << size_ << ")";
      throw std::runtime_error(msg.str());
    }
    in_.read(static_cast<char*>(p), static_cast<std::streamsize>(n));
    pos_ += n;
  }

  template <typename T>
  T pod() {
    T v;
    read(&v, sizeof(T));
    return v;
  }

  std::string str(std::size_t n) {
    std::string s(n, '\0');
    read(s.data(), n);
    return s;
  }

  std::uint64_t remaining() const { return size_ - pos_; }

 private:
  std::filesystem::path path_;
  std::string what_;
  std::ifstream in_;
  std::uint64_t size_ = 0;
  std::uint64_t pos_ = 0;
};

inline void check_magic(Reader& r, const char* magic, const char* what) {
  char found[6];
  r.read(found, 6);
  if (std::memcmp(found, magic, 6) != 0)
    throw std::runtime_error(std::string(what) + ": bad magic bytes (not a " + magic + " file)");
}

inline void check_version(std::uint16_t found, std::uint16_t supported, const char* what) {
  if (found != supported) {
    std::ostringstream msg;
    msg << what << ": unsupported format version " << found << " (this build reads version "
        << supported << ")";
    throw std::runtime_error(msg.str());
  }
}

inline std::ofstream open_out(const std::filesystem::path& path, const char* what) {
  std::ofstream out(path, std::ios::binary | std::ios::trunc);
  if (!out) throw std::runtime_error(std::string(what) + ": cannot write " + path.string());
  return out;
}

}  // namespace pixphys::detail
