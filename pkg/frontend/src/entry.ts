import { initConsole } from "./main";

const app = document.getElementById("app");
if (app) initConsole(app);
