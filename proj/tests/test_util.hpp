#pragma once

#include <filesystem>
#include <functional>
#include <optional>
#include <string>

#include <gtest/gtest.h>

#include "msent/error.hpp"

namespace msent::test {

/// Runs `fn` and returns the kind of the msent::Error it throws; fails the test otherwise.
inline std::optional<ErrorKind> error_kind(const std::function<void()>& fn, std::string* message = nullptr) {
    try {
        fn();
    } catch (const Error& e) {
        if (message) *message = e.what();
        return e.kind();
    }
    return std::nullopt;
}

#define EXPECT_MSENT_ERROR(stmt, kind_) \
    EXPECT_EQ(::msent::test::error_kind([&] { static_cast<void>(stmt); }), std::optional<::msent::ErrorKind>(kind_))

/// Fresh directory under the system temp dir, removed on destruction.
class TempDir {
public:
    explicit TempDir(const std::string& tag) {
        const auto* info = ::testing::UnitTest::GetInstance()->current_test_info();
        std::string name = "msent_" + tag;
        if (info) name += std::string("_") + info->test_suite_name() + "_" + info->name();
        path_ = std::filesystem::temp_directory_path() / name;
        std::filesystem::remove_all(path_);
        std::filesystem::create_directories(path_);
    }
    ~TempDir() {
        std::error_code ec;
        std::filesystem::remove_all(path_, ec);
    }
    TempDir(const TempDir&) = delete;
    TempDir& operator=(const TempDir&) = delete;

    [[nodiscard]] const std::filesystem::path& path() const noexcept { return path_; }
    std::filesystem::path operator/(const std::filesystem::path& name) const { return path_ / name; }

private:
    std::filesystem::path path_;
};

inline std::filesystem::path data_path(const std::string& name) {
    return std::filesystem::path(MSENT_TEST_DATA) / name;
}

}  // namespace msent::test
