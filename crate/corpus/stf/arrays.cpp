#include <cstdio>

void fill(int* a, int n, int v) {
    for (int i = 0; i < n; i++) {
        a[i] = v + i;
    }
}

void inc(int& x) {
    x = x + 100;
}

void setIndex(int& i, int v) {
    i = v;
}

int main() {
    int data[8];
    fill(data, 8, 1);
    int k = 0;
    setIndex(k, 3);
    inc(data[k]);
    setIndex(k, 5);
    inc(data[k]);
    int sum = 0;
    for (int i = 0; i < 8; i++) {
        sum = sum + data[i];
    }
    printf("%d %d\n", sum, k);
    return 0;
}
