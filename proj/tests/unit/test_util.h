#pragma once

#include <atomic>
#include <filesystem>
#include <fstream>
#include <string>
#include <unistd.h>

#include "estc/catalog.h"

namespace estc::testing {

// Fresh directory under the system temp dir, removed on destruction.
class TempDir {
 public:
  TempDir() {
    static std::atomic<int> counter{0};
    path_ = std::filesystem::temp_directory_path() /
            ("estc-test-" + std::to_string(::getpid()) + "-" +
             std::to_string(counter++));
    std::filesystem::remove_all(path_);
    std::filesystem::create_directories(path_);
  }
  ~TempDir() {
    std::error_code ec;
    std::filesystem::remove_all(path_, ec);
  }
  const std::filesystem::path& path() const { return path_; }
  std::filesystem::path operator/(const std::string& name) const { return path_ / name; }

 private:
  std::filesystem::path path_;
};

inline void write_text(const std::filesystem::path& p, const std::string& text) {
  std::ofstream out(p, std::ios::binary);
  out << text;
}

inline Product make_product(std::string id, std::string title,
                            std::vector<Attribute> attrs = {},
                            std::string ocr = {}) {
  Product p;
  p.id = std::move(id);
  p.title = std::move(title);
  p.attributes = std::move(attrs);
  p.ocr_text = std::move(ocr);
  return p;
}

inline std::filesystem::path data_dir() { return ESTC_TEST_DATA; }

}  // namespace estc::testing
