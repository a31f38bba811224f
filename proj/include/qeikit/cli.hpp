/*
 * Licensed under the Apache License Version 2.0. See LICENSE file in the
 * project root for license information.
 */
#ifndef QEIKIT_CLI_HPP
#define QEIKIT_CLI_HPP

namespace qeikit::cli {

//! Command line entry point. Exit codes: 0 success, 2 contract violation,
//! 3 numerical failure, 64 usage error.
int run(int argc, const char* const* argv);

}  // namespace qeikit::cli

#endif  // QEIKIT_CLI_HPP
