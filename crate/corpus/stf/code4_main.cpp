#include <cstdio>

void f(int& v) {
    v *= 2;
}

int main() {
    int var = 3;
    f(var);
    var += 1;
    printf("%d\n", var);
    return 0;
}
