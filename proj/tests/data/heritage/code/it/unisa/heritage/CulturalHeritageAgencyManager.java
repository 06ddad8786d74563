package it.unisa.heritage;

import it.unisa.heritage.CulturalHeritageChecker;
import java.util.List;

// Agency side of the cultural heritage registry.
public class CulturalHeritageAgencyManager extends BaseManager {
    private CulturalHeritageChecker checker = new CulturalHeritageChecker();
    private List<String> registered;

    /**
     * Registers a cultural heritage object.
     * @param name object name
     */
    public boolean insertCulturalHeritage(String name, String description) {
        if (!checker.checkHeritage(name, description)) {
            return false;
        }
        save(name);
        return true;
    }
}
