void work(int& v){
    v = v * 2;
}
int functionWithReturn(int a, int b){
    if(a>b){
        work(a);
        return a;
    }
    else{
        work(b);
        return b;
    }
}
