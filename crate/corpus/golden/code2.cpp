int f(int v){
    return v + 1;
}
void caller(){
    int x;
    const int y = f(x);
}
