//! Holds the `acceptance` test target. Kept in its own package so it runs
//! after every other suite in a workspace test run.
