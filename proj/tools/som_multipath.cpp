// SPDX-License-Identifier: Apache-2.0

#include "som/cli.hpp"

int main(int argc, char** argv) { return som::dispatch(argc, argv); }
