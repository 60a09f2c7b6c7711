namespace ttpricer {}
