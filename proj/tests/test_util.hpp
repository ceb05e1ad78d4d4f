#pragma once

#include <gtest/gtest.h>

#include <filesystem>
#include <string>

#include "ktsnn/error.hpp"

#define EXPECT_ERRC(stmt, errc)                                            \
  do {                                                                     \
    try {                                                                  \
      stmt;                                                                \
      ADD_FAILURE() << "expected " << ktsnn::errc_name(errc);              \
    } catch (const ktsnn::Error& e_) {                                     \
      EXPECT_EQ(e_.code(), errc) << e_.what();                             \
    }                                                                      \
  } while (0)

// Fresh empty directory under the system temp dir, removed on destruction.
class TempDir {
 public:
  explicit TempDir(const std::string& tag) {
    path_ = std::filesystem::temp_directory_path() /
            ("ktsnn_" + tag + "_" + std::to_string(::testing::UnitTest::GetInstance()->random_seed()) + "_" +
             std::to_string(reinterpret_cast<std::uintptr_t>(this)));
    std::filesystem::remove_all(path_);
    std::filesystem::create_directories(path_);
  }
  ~TempDir() {
    std::error_code ec;
    std::filesystem::remove_all(path_, ec);
  }
  const std::filesystem::path& path() const { return path_; }

 private:
  std::filesystem::path path_;
};
