#include <cstdio>

void work(int& v, const int w) {
    v = v + w;
}

void report(const int v, int& out) {
    out = v;
}

int main() {
    int z = 4;
    int result = 0;
    if (z > 0) {
        int var1 = 1;
        int& var2 = z;
        work(var1, var2);
        report(var1, result);
    }
    printf("%d\n", result);
    return 0;
}
