/*
 * Licensed under the Apache License Version 2.0. See LICENSE file in the
 * project root for license information.
 */
#include "qeikit/cli.hpp"

int main(int argc, char** argv) { return qeikit::cli::run(argc, argv); }
