#include <cstdio>
int main() { std::puts("invkit"); return 0; }
