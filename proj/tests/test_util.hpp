#pragma once

#include <gtest/gtest.h>

#include "banditlab/error.hpp"

// Expects `stmt` to throw banditlab::Error with the given code.
#define EXPECT_CODE(stmt, expected_code)                                                  \
  do {                                                                                    \
    try {                                                                                 \
      stmt;                                                                               \
      ADD_FAILURE() << "no exception from " #stmt;                                        \
    } catch (const banditlab::Error& e) {                                                 \
      EXPECT_EQ(e.code(), expected_code) << e.what();                                     \
    }                                                                                     \
  } while (0)
