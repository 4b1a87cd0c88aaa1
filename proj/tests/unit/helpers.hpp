#pragma once

#include "smile/error.hpp"
#include "smile/random.hpp"
#include "smile/tensor.hpp"

#include "doctest.h"

#include <filesystem>
#include <string>

namespace smile::test {

#define CHECK_THROWS_KIND(expr, expected_kind)                       \
    do {                                                             \
        bool thrown_ = false;                                        \
        try {                                                        \
            (void)(expr);                                            \
        } catch (const ::smile::Error& e_) {                         \
            thrown_ = true;                                          \
            CHECK_MESSAGE(e_.kind() == (expected_kind), e_.what());  \
        }                                                            \
        CHECK_MESSAGE(thrown_, "expected smile::Error from " #expr); \
    } while (0)

inline std::filesystem::path temp_dir(const std::string& name) {
    auto dir = std::filesystem::temp_directory_path() / ("smile_test_" + name);
    std::filesystem::remove_all(dir);
    std::filesystem::create_directories(dir);
    return dir;
}

} // namespace smile::test
